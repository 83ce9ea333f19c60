import io
import json

import pytest
from hypothesis import given, settings, strategies as st

from b2v.interchange import (
    DumpFormatError,
    parse_program_line,
    program_to_line,
    read_dump,
    validate_dump,
    write_dump,
)
from b2v.ir import Const, ConstOperand, TempOperand, WrTmp, render
from b2v.lifter import Program, lift_binary


def canonical(program: Program):
    """Structural identity of what a dump is specified to carry."""
    return (
        program.binary_id,
        program.arch,
        program.label,
        {
            addr: (tuple(block.stmts), tuple(sorted(a for a, _ in block.successors)))
            for addr, block in program.cfg.blocks.items()
        },
    )


class TestRoundTrip:
    def test_fixture_binaries(self, fixture_programs):
        for name, program in fixture_programs.items():
            line = program_to_line(program)
            back = parse_program_line(line)
            assert canonical(back) == canonical(program), name
            assert program_to_line(back) == line, name

    def test_write_read_write_byte_identical(self, fixture_programs, tmp_path):
        for i, program in enumerate(fixture_programs.values()):
            p1 = tmp_path / f"a{i}.b2v.jsonl"
            p2 = tmp_path / f"b{i}.b2v.jsonl"
            write_dump(program, p1)
            write_dump(read_dump(p1), p2)
            assert p1.read_bytes() == p2.read_bytes()

    def test_statement_example(self):
        obj = {"kind": "WrTmp", "tmp": "t0",
               "expr": {"kind": "Const", "value": "0x1", "width": 32}}
        line = json.dumps({
            "v": 1, "binary_id": "x", "arch": "x86_64", "label": None,
            "blocks": [{"addr": "0x0", "stmts": [obj], "successors": []}],
        }, separators=(",", ":"))
        prog = parse_program_line(line)
        stmt = prog.cfg.blocks[0].stmts[0]
        assert stmt == WrTmp(TempOperand(0, 32), Const(ConstOperand(1, 32)))

    def test_render_stable_through_interchange(self, fixture_programs):
        # parse-back of the structured encoding must not change rendering
        for program in fixture_programs.values():
            back = parse_program_line(program_to_line(program))
            for addr, block in program.cfg.blocks.items():
                ours = [render(s) for s in block.stmts]
                theirs = [render(s) for s in back.cfg.blocks[addr].stmts]
                assert ours == theirs


class TestValidation:
    def test_fixture_dumps_valid(self, fixture_dumps):
        for name, path in fixture_dumps.items():
            assert validate_dump(path) == [], name

    def test_absent_successor_accepted(self):
        line = ('{"v":1,"binary_id":"x","arch":"a","label":null,"blocks":'
                '[{"addr":"0x1","stmts":[],"successors":["0x999"]}]}')
        prog = parse_program_line(line)
        assert prog.cfg.blocks[1].successors == [(0x999, "jump")]
        assert validate_dump(io.StringIO(line)) == []

    def test_v_must_be_first(self):
        line = ('{"binary_id":"x","v":1,"arch":"a","label":null,"blocks":[]}')
        assert validate_dump(io.StringIO(line))
        with pytest.raises(DumpFormatError):
            parse_program_line(line)

    def test_unknown_key_rejected(self):
        line = ('{"v":1,"binary_id":"x","arch":"a","label":null,"blocks":[],'
                '"extra":1}')
        violations = validate_dump(io.StringIO(line))
        assert violations and "extra" in violations[0]

    def test_unknown_statement_kind_named(self):
        line = ('{"v":1,"binary_id":"x","arch":"a","label":null,"blocks":'
                '[{"addr":"0x1","stmts":[{"kind":"Frobnicate"}],"successors":[]}]}')
        with pytest.raises(DumpFormatError, match="Frobnicate"):
            parse_program_line(line)

    def test_error_carries_line_number(self):
        stream = io.StringIO('{"v":1,"binary_id":"x","arch":"a","label":null,"blocks":[]}\n'
                             '{"v":2}\n')
        violations = validate_dump(stream)
        assert len(violations) == 1 and "line 2" in violations[0]

    def test_uppercase_hex_rejected(self):
        line = ('{"v":1,"binary_id":"x","arch":"a","label":null,"blocks":'
                '[{"addr":"0xFF","stmts":[],"successors":[]}]}')
        assert validate_dump(io.StringIO(line))

    def test_floats_rejected_anywhere(self):
        line = ('{"v":1,"binary_id":"x","arch":"a","label":null,"blocks":'
                '[{"addr":"0x1","stmts":[{"kind":"IMark","addr":"0x1","len":2.0}],'
                '"successors":[]}]}')
        assert validate_dump(io.StringIO(line))

    def test_duplicate_block_addr_rejected(self):
        line = ('{"v":1,"binary_id":"x","arch":"a","label":null,"blocks":'
                '[{"addr":"0x1","stmts":[],"successors":[]},'
                '{"addr":"0x1","stmts":[],"successors":[]}]}')
        assert any("duplicate" in v for v in validate_dump(io.StringIO(line)))

    def test_double_temp_write_rejected(self):
        stmt = ('{"kind":"WrTmp","tmp":"t0","expr":'
                '{"kind":"Const","value":"0x1","width":32}}')
        line = ('{"v":1,"binary_id":"x","arch":"a","label":null,"blocks":'
                f'[{{"addr":"0x1","stmts":[{stmt},{stmt}],"successors":[]}}]}}')
        assert any("more than once" in v for v in validate_dump(io.StringIO(line)))

    def test_garbage_never_raises(self):
        for blob in (b"\xff\xfe\x00", b"{]", b"", b'{"v":"x"}', b"[1,2,3]"):
            assert validate_dump(io.BytesIO(blob)) != []

    def test_empty_dump_is_a_violation(self):
        assert validate_dump(io.StringIO("")) != []


# ---------------------------------------------------------------------------
# Property: arbitrary lifted programs survive the round trip byte-exactly.


@st.composite
def tiny_elf_programs(draw):
    # random but decodable straight-line code, then ret
    chunks = draw(st.lists(st.sampled_from([
        b"\x90", b"\x55", b"\x5d", b"\x48\x89\xe5", b"\x83\xc0\x01",
        b"\x31\xd2", b"\x48\xff\xc1", b"\xf7\xd8", b"\x99",
        b"\x0f\xb6\xc0", b"\x85\xc0", b"\x74\x00",
    ]), max_size=12))
    return b"".join(chunks) + b"\xc3"


@given(tiny_elf_programs())
@settings(max_examples=25, deadline=None)
def test_roundtrip_property(code):
    from test_lifter import _make_elf

    program = lift_binary(_make_elf(code), binary_id="prop")
    line = program_to_line(program)
    back = parse_program_line(line)
    assert canonical(back) == canonical(program)
    assert program_to_line(back) == line
    assert validate_dump(io.StringIO(line)) == []
