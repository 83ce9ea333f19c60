import pytest
from hypothesis import given, strategies as st

from b2v import ir
from b2v.ir import (
    BasicBlock,
    Const,
    ConstOperand,
    Exit,
    GetReg,
    IMark,
    Load,
    Op,
    Opaque,
    PutReg,
    RdTmp,
    RegOperand,
    Store,
    TempOperand,
    WrTmp,
    check_block_ssa,
    opcode_signature,
    render,
)


def c32(v):
    return Const(ConstOperand(v, 32))


class TestSignatures:
    def test_add32(self):
        assert opcode_signature("Add32") == (2, (32, 32), 32)

    def test_not64(self):
        assert opcode_signature("Not64") == (1, (64,), 64)

    def test_cmpeq32_yields_one_bit(self):
        assert opcode_signature("CmpEQ32") == (2, (32, 32), 1)

    def test_shift_amount_is_byte(self):
        assert opcode_signature("Shl64") == (2, (64, 8), 64)

    def test_conversions(self):
        assert opcode_signature("8Uto32") == (1, (8,), 32)
        assert opcode_signature("32Sto64") == (1, (32,), 64)
        assert opcode_signature("64to32") == (1, (64,), 32)

    def test_unknown_opcode_named_in_error(self):
        with pytest.raises(ir.SignatureError, match="Fnord32"):
            opcode_signature("Fnord32")

    def test_op_arity_enforced(self):
        with pytest.raises(ir.IrError):
            Op("Add32", (c32(1),))


class TestRender:
    def test_wrtmp_op(self):
        stmt = WrTmp(TempOperand(0, 32),
                     Op("Add32", (GetReg(RegOperand("eax", 32, 0)), c32(1))))
        assert render(stmt) == "t0 = Add32(eax_0,0x1)"

    def test_const_lowercase_hex(self):
        assert render(Const(ConstOperand(255, 32))) == "0xff"

    def test_putreg_rdtmp(self):
        stmt = PutReg(RegOperand("eax", 32, 1), RdTmp(TempOperand(0, 32)))
        assert render(stmt) == "eax_1 = t0"

    def test_reg_without_subscript(self):
        assert render(GetReg(RegOperand("rbx", 64))) == "rbx"

    def test_store_exit_imark_opaque(self):
        assert render(Store(RdTmp(TempOperand(1, 64)),
                            GetReg(RegOperand("rbx", 64, 0)))) == "Store(t1,rbx_0)"
        guard = RdTmp(TempOperand(2, 1))
        assert render(Exit(guard, 0x401000)) == "Exit(t2,0x401000)"
        assert render(IMark(0x401000, 3)) == "IMark(0x401000,3)"
        assert render(Opaque("fcos")) == "Opaque(fcos)"

    def test_load_carries_width(self):
        assert render(Load(RdTmp(TempOperand(3, 64)), 64)) == "Load64(t3)"
        assert render(Load(RdTmp(TempOperand(3, 64)), 8)) == "Load8(t3)"

    def test_single_line(self):
        stmt = WrTmp(TempOperand(0, 64),
                     Op("Add64", (Load(c64(0x10), 64), Load(c64(0x20), 64))))
        assert "\n" not in render(stmt)


def c64(v):
    return Const(ConstOperand(v, 64))


class TestOperandInvariants:
    def test_reg_width_checked(self):
        with pytest.raises(ir.IrError):
            RegOperand("eax", 12)

    def test_negative_ssa_rejected(self):
        with pytest.raises(ir.IrError):
            RegOperand("eax", 32, -1)

    def test_const_range_checked(self):
        with pytest.raises(ir.IrError):
            ConstOperand(256, 8)
        ConstOperand(255, 8)

    def test_temp_nonnegative(self):
        with pytest.raises(ir.IrError):
            TempOperand(-1, 32)


class TestBlockSsa:
    def test_double_write_flagged(self):
        block = BasicBlock(addr=0, stmts=[
            WrTmp(TempOperand(0, 32), c32(1)),
            WrTmp(TempOperand(0, 32), c32(2)),
        ])
        assert check_block_ssa(block)

    def test_clean_block(self):
        block = BasicBlock(addr=0, stmts=[
            WrTmp(TempOperand(0, 32), c32(1)),
            WrTmp(TempOperand(1, 32), RdTmp(TempOperand(0, 32))),
        ])
        assert check_block_ssa(block) == []


# ---------------------------------------------------------------------------
# Property: rendering is injective over structurally distinct statements
# (constant widths excluded: 0xff renders identically at any width).

_regs = st.sampled_from(["rax", "rbx", "rcx", "eax", "ebx", "r9"])
_widths = st.sampled_from([32, 64])


@st.composite
def exprs(draw, width, depth=0):
    choices = ["const", "reg", "tmp"]
    if depth < 2:
        choices += ["op", "load"]
    kind = draw(st.sampled_from(choices))
    if kind == "const":
        return Const(ConstOperand(draw(st.integers(0, 2 ** width - 1)), width))
    if kind == "reg":
        name = draw(_regs)
        return GetReg(RegOperand(name, width, draw(st.integers(0, 3))))
    if kind == "tmp":
        return RdTmp(TempOperand(draw(st.integers(0, 9)), width))
    if kind == "load":
        return Load(draw(exprs(64, depth + 1)), width)
    opname = draw(st.sampled_from(["Add", "Sub", "Xor", "Mul"]))
    lhs = draw(exprs(width, depth + 1))
    rhs = draw(exprs(width, depth + 1))
    return Op(f"{opname}{width}", (lhs, rhs))


@st.composite
def stmts(draw):
    width = draw(_widths)
    kind = draw(st.sampled_from(["wrtmp", "putreg", "store", "exit", "imark", "opaque"]))
    if kind == "wrtmp":
        return WrTmp(TempOperand(draw(st.integers(0, 9)), width), draw(exprs(width)))
    if kind == "putreg":
        return PutReg(RegOperand(draw(_regs), width, draw(st.integers(0, 3))),
                      draw(exprs(width)))
    if kind == "store":
        return Store(draw(exprs(64)), draw(exprs(width)))
    if kind == "exit":
        guard = Op("CmpEQ32", (draw(exprs(32)), draw(exprs(32))))
        return Exit(guard, draw(st.integers(0, 2 ** 32 - 1)))
    if kind == "imark":
        return IMark(draw(st.integers(0, 2 ** 32 - 1)), draw(st.integers(1, 15)))
    return Opaque(draw(st.sampled_from(["fcos", "cpuid", "xgetbv", "rep movs"])))


def _width_erased(stmt):
    """Key under which render is expected to be injective.

    Operand widths are deliberately not part of the textual grammar (0xff
    reads the same at 8 or 32 bits; a temp or register name implies its
    width), so the injectivity claim is over width-erased structure.
    """
    def walk(e):
        if isinstance(e, Const):
            return ("const", e.const.value)
        if isinstance(e, RdTmp):
            return ("tmp", e.tmp.id)
        if isinstance(e, GetReg):
            return ("reg", e.reg.name, e.reg.ssa_index)
        if isinstance(e, Op):
            return ("op", e.opcode, tuple(walk(a) for a in e.args))
        if isinstance(e, Load):
            return ("load", e.width, walk(e.addr))
        return e
    if isinstance(stmt, WrTmp):
        return ("wrtmp", stmt.dst.id, walk(stmt.rhs))
    if isinstance(stmt, PutReg):
        return ("putreg", stmt.dst.name, stmt.dst.ssa_index, walk(stmt.rhs))
    if isinstance(stmt, Store):
        return ("store", walk(stmt.addr), walk(stmt.data))
    if isinstance(stmt, Exit):
        return ("exit", walk(stmt.guard), stmt.target)
    return stmt


@given(st.lists(stmts(), min_size=2, max_size=6))
def test_render_injective_up_to_operand_widths(statements):
    seen = {}
    for stmt in statements:
        text = render(stmt)
        key = _width_erased(stmt)
        if text in seen:
            assert seen[text] == key, f"collision: {text!r}"
        seen[text] = key


@given(stmts())
def test_render_deterministic(stmt):
    assert render(stmt) == render(stmt)
