"""Versioned JSONL dump format for lifted programs (`.b2v.jsonl`).

One JSON object per line describes one binary: schema version, identity,
architecture, optional class label, and all basic blocks with structured
statements. Statements are stored as nested objects, never as rendered
strings, and registers are stored without SSA subscripts (renaming is
recomputed when graphs are built). Addresses and constant values are
lowercase 0x-prefixed hex strings; nothing in a dump is a float.
"""

from __future__ import annotations

import json
from typing import Iterable

from .ir import (
    BasicBlock,
    Const,
    ConstOperand,
    Exit,
    GetReg,
    IMark,
    Load,
    MicroExpr,
    MicroStmt,
    Op,
    Opaque,
    PutReg,
    RdTmp,
    RegOperand,
    Store,
    TempOperand,
    WrTmp,
    IrError,
    SignatureError,
    VALUE_WIDTHS,
    expr_width,
    opcode_signature,
)
from .lifter import Cfg, Program

FILE_SUFFIX = ".b2v.jsonl"
SCHEMA_VERSION = 1

_TOP_KEYS = ("v", "binary_id", "arch", "label", "blocks")
_BLOCK_KEYS = ("addr", "stmts", "successors")
_STMT_KEYS = {
    "WrTmp": ("kind", "tmp", "expr"),
    "PutReg": ("kind", "reg", "width", "expr"),
    "Store": ("kind", "addr", "data"),
    "Exit": ("kind", "guard", "target"),
    "IMark": ("kind", "addr", "len"),
    "Opaque": ("kind", "mnemonic"),
}
_EXPR_KEYS = {
    "Const": ("kind", "value", "width"),
    "RdTmp": ("kind", "tmp", "width"),
    "GetReg": ("kind", "reg", "width"),
    "Op": ("kind", "op", "args"),
    "Load": ("kind", "width", "addr"),
}


class DumpFormatError(Exception):
    def __init__(self, message: str, line: int | None = None, key: str | None = None):
        loc = f"line {line}" if line is not None else "stream"
        at = f", key {key!r}" if key else ""
        super().__init__(f"{loc}{at}: {message}")
        self.line = line
        self.key = key


def _hex(value: int) -> str:
    return f"{value:#x}"


# ---------------------------------------------------------------------------
# Encoding


def _encode_expr(expr: MicroExpr) -> dict:
    if isinstance(expr, Const):
        return {"kind": "Const", "value": _hex(expr.const.value), "width": expr.const.width}
    if isinstance(expr, RdTmp):
        return {"kind": "RdTmp", "tmp": f"t{expr.tmp.id}", "width": expr.tmp.width}
    if isinstance(expr, GetReg):
        return {"kind": "GetReg", "reg": expr.reg.name, "width": expr.reg.width}
    if isinstance(expr, Op):
        return {"kind": "Op", "op": expr.opcode, "args": [_encode_expr(a) for a in expr.args]}
    if isinstance(expr, Load):
        return {"kind": "Load", "width": expr.width, "addr": _encode_expr(expr.addr)}
    raise DumpFormatError(f"cannot encode expression {expr!r}")


def _encode_stmt(stmt: MicroStmt) -> dict:
    if isinstance(stmt, WrTmp):
        return {"kind": "WrTmp", "tmp": f"t{stmt.dst.id}", "expr": _encode_expr(stmt.rhs)}
    if isinstance(stmt, PutReg):
        return {"kind": "PutReg", "reg": stmt.dst.name, "width": stmt.dst.width,
                "expr": _encode_expr(stmt.rhs)}
    if isinstance(stmt, Store):
        return {"kind": "Store", "addr": _encode_expr(stmt.addr),
                "data": _encode_expr(stmt.data)}
    if isinstance(stmt, Exit):
        return {"kind": "Exit", "guard": _encode_expr(stmt.guard), "target": _hex(stmt.target)}
    if isinstance(stmt, IMark):
        return {"kind": "IMark", "addr": _hex(stmt.addr), "len": stmt.length}
    if isinstance(stmt, Opaque):
        return {"kind": "Opaque", "mnemonic": stmt.mnemonic}
    raise DumpFormatError(f"cannot encode statement {stmt!r}")


def program_to_line(program: Program) -> str:
    blocks = []
    for addr in sorted(program.cfg.blocks):
        block = program.cfg.blocks[addr]
        blocks.append({
            "addr": _hex(addr),
            "stmts": [_encode_stmt(s) for s in block.stmts],
            "successors": [_hex(a) for a, _ in block.successors],
        })
    obj = {
        "v": SCHEMA_VERSION,
        "binary_id": program.binary_id,
        "arch": program.arch,
        "label": program.label,
        "blocks": blocks,
    }
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=False)


def write_dump(programs: Program | Iterable[Program], sink) -> None:
    """Serialize programs as JSONL to a file path or text file object."""
    if isinstance(programs, Program):
        programs = [programs]
    text = "".join(program_to_line(p) + "\n" for p in programs)
    if hasattr(sink, "write"):
        sink.write(text)
    else:
        with open(sink, "w", encoding="utf-8") as fh:
            fh.write(text)


# ---------------------------------------------------------------------------
# Decoding


class _LineReader:
    """Strict schema walk over one parsed dump line."""

    def __init__(self, lineno: int):
        self.lineno = lineno

    def fail(self, message: str, key: str | None = None):
        raise DumpFormatError(message, line=self.lineno, key=key)

    def expect_keys(self, obj, keys, what: str):
        if not isinstance(obj, dict):
            self.fail(f"{what} must be an object")
        if tuple(obj.keys()) != keys:
            got = ", ".join(obj.keys())
            self.fail(f"{what} must have keys {keys} in order, got ({got})",
                      key=next((k for k in obj if k not in keys), None))

    def hex_addr(self, value, what: str) -> int:
        if (not isinstance(value, str) or not value.startswith("0x")
                or value != value.lower() or len(value) < 3):
            self.fail(f"{what} must be a lowercase 0x-prefixed hex string, got {value!r}")
        try:
            return int(value, 16)
        except ValueError:
            self.fail(f"{what} is not valid hex: {value!r}")

    def width(self, value, what: str) -> int:
        if not isinstance(value, int) or isinstance(value, bool) or value not in VALUE_WIDTHS:
            self.fail(f"{what} must be one of {VALUE_WIDTHS}, got {value!r}")
        return value

    def temp_id(self, value, what: str) -> int:
        if not isinstance(value, str) or not value.startswith("t"):
            self.fail(f"{what} must look like 't<n>', got {value!r}")
        try:
            tid = int(value[1:])
        except ValueError:
            tid = -1
        if tid < 0:
            self.fail(f"{what} must look like 't<n>', got {value!r}")
        return tid

    def expr(self, obj, temps: dict[int, int]) -> MicroExpr:
        if not isinstance(obj, dict) or "kind" not in obj:
            self.fail("expression must be an object with a 'kind'")
        kind = obj["kind"]
        if kind not in _EXPR_KEYS:
            self.fail(f"unknown expression kind {kind!r}", key="kind")
        self.expect_keys(obj, _EXPR_KEYS[kind], f"{kind} expression")
        try:
            if kind == "Const":
                value = self.hex_addr(obj["value"], "Const value")
                return Const(ConstOperand(value, self.width(obj["width"], "Const width")))
            if kind == "RdTmp":
                tid = self.temp_id(obj["tmp"], "RdTmp tmp")
                width = self.width(obj["width"], "RdTmp width")
                if tid in temps and temps[tid] != width:
                    self.fail(f"t{tid} read at width {width} but written at {temps[tid]}")
                return RdTmp(TempOperand(tid, width))
            if kind == "GetReg":
                if not isinstance(obj["reg"], str) or not obj["reg"]:
                    self.fail("GetReg reg must be a nonempty string", key="reg")
                return GetReg(RegOperand(obj["reg"], self.width(obj["width"], "GetReg width")))
            if kind == "Op":
                if not isinstance(obj["args"], list):
                    self.fail("Op args must be a list", key="args")
                args = tuple(self.expr(a, temps) for a in obj["args"])
                try:
                    op = Op(obj["op"], args)
                except SignatureError as exc:
                    self.fail(str(exc), key="op")
                _, arg_widths, _ = opcode_signature(op.opcode)
                for got, want in zip(args, arg_widths):
                    if expr_width(got) != want:
                        self.fail(f"{op.opcode} argument width {expr_width(got)} != {want}", key="args")
                return op
            if kind == "Load":
                width = self.width(obj["width"], "Load width")
                return Load(self.expr(obj["addr"], temps), width)
        except IrError as exc:
            self.fail(str(exc))
        raise AssertionError("unreachable")

    def stmt(self, obj, temps: dict[int, int]) -> MicroStmt:
        if not isinstance(obj, dict) or "kind" not in obj:
            self.fail("statement must be an object with a 'kind'")
        kind = obj["kind"]
        if kind not in _STMT_KEYS:
            self.fail(f"unknown statement kind {kind!r}", key="kind")
        self.expect_keys(obj, _STMT_KEYS[kind], f"{kind} statement")
        try:
            if kind == "WrTmp":
                rhs = self.expr(obj["expr"], temps)
                tid = self.temp_id(obj["tmp"], "WrTmp tmp")
                width = expr_width(rhs)
                if tid in temps:
                    self.fail(f"t{tid} written more than once in a block", key="tmp")
                temps[tid] = width
                return WrTmp(TempOperand(tid, width), rhs)
            if kind == "PutReg":
                rhs = self.expr(obj["expr"], temps)
                width = self.width(obj["width"], "PutReg width")
                if expr_width(rhs) != width:
                    self.fail(f"PutReg width {width} != expression width {expr_width(rhs)}")
                return PutReg(RegOperand(obj["reg"], width), rhs)
            if kind == "Store":
                return Store(self.expr(obj["addr"], temps), self.expr(obj["data"], temps))
            if kind == "Exit":
                guard = self.expr(obj["guard"], temps)
                if expr_width(guard) != 1:
                    self.fail(f"Exit guard must be 1-bit, got width {expr_width(guard)}")
                return Exit(guard, self.hex_addr(obj["target"], "Exit target"))
            if kind == "IMark":
                length = obj["len"]
                if not isinstance(length, int) or isinstance(length, bool) or length <= 0:
                    self.fail("IMark len must be a positive integer", key="len")
                return IMark(self.hex_addr(obj["addr"], "IMark addr"), length)
            if kind == "Opaque":
                if not isinstance(obj["mnemonic"], str) or not obj["mnemonic"]:
                    self.fail("Opaque mnemonic must be a nonempty string", key="mnemonic")
                return Opaque(obj["mnemonic"])
        except IrError as exc:
            self.fail(str(exc))
        raise AssertionError("unreachable")


def _reject_floats(value: str):
    raise ValueError(f"float value {value!r} not allowed in dumps")


def parse_program_line(line: str, lineno: int = 1) -> Program:
    reader = _LineReader(lineno)
    try:
        obj = json.loads(line, parse_float=_reject_floats)
    except ValueError as exc:
        reader.fail(f"invalid JSON: {exc}")
    reader.expect_keys(obj, _TOP_KEYS, "dump line")
    if list(obj.keys())[0] != "v":
        reader.fail("schema version must be the first key", key="v")
    if obj["v"] != SCHEMA_VERSION:
        reader.fail(f"unsupported schema version {obj['v']!r}", key="v")
    if not isinstance(obj["binary_id"], str) or not obj["binary_id"]:
        reader.fail("binary_id must be a nonempty string", key="binary_id")
    if not isinstance(obj["arch"], str) or not obj["arch"]:
        reader.fail("arch must be a nonempty string", key="arch")
    label = obj["label"]
    if isinstance(label, bool) or (label is not None and not isinstance(label, (str, int))):
        reader.fail("label must be a string, integer or null", key="label")
    if not isinstance(obj["blocks"], list):
        reader.fail("blocks must be a list", key="blocks")

    cfg = Cfg()
    for raw in obj["blocks"]:
        reader.expect_keys(raw, _BLOCK_KEYS, "block")
        addr = reader.hex_addr(raw["addr"], "block addr")
        if addr in cfg.blocks:
            reader.fail(f"duplicate block address {_hex(addr)}", key="addr")
        if not isinstance(raw["stmts"], list):
            reader.fail("stmts must be a list", key="stmts")
        temps: dict[int, int] = {}
        stmts = [reader.stmt(s, temps) for s in raw["stmts"]]
        if not isinstance(raw["successors"], list):
            reader.fail("successors must be a list", key="successors")
        succs = [(reader.hex_addr(s, "successor"), "jump") for s in raw["successors"]]
        cfg.blocks[addr] = BasicBlock(addr=addr, stmts=stmts, successors=succs)
    return Program(binary_id=obj["binary_id"], arch=obj["arch"], cfg=cfg, label=label)


def read_dump(source) -> list[Program]:
    """Parse a dump from a path or text file object; raises DumpFormatError."""
    if hasattr(source, "read"):
        text = source.read()
    else:
        with open(source, "r", encoding="utf-8") as fh:
            text = fh.read()
    programs = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        programs.append(parse_program_line(line, lineno))
    if not programs:
        raise DumpFormatError("dump contains no program lines")
    return programs


def validate_dump(source) -> list[str]:
    """All schema violations in a byte/text stream; empty means valid."""
    if hasattr(source, "read"):
        text = source.read()
    else:
        try:
            with open(source, "rb") as fh:
                text = fh.read()
        except OSError as exc:
            return [f"unreadable: {exc}"]
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            return [f"not UTF-8: {exc}"]
    violations = []
    seen_any = False
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        seen_any = True
        try:
            parse_program_line(line, lineno)
        except DumpFormatError as exc:
            violations.append(str(exc))
        except Exception as exc:  # never panic on hostile input
            violations.append(f"line {lineno}: {exc}")
    if not seen_any:
        violations.append("dump contains no program lines")
    return violations
