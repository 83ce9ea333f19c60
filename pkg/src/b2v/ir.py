"""Micro-IR statement and expression types plus their canonical text rendering.

The dialect follows the usual lifted-IR split: statements cause side effects
(write a temporary, write a register, store, conditional exit), expressions
are pure trees over constants, registers and single-assignment temporaries.
Every entity renders to exactly one line of text; that rendering doubles as
the node-label / bag-of-words grammar for the rest of the pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

REG_WIDTHS = (8, 16, 32, 64)
VALUE_WIDTHS = (1, 8, 16, 32, 64)


class IrError(Exception):
    pass


class SignatureError(IrError):
    """Raised for opcodes missing from the signature table."""


# ---------------------------------------------------------------------------
# Operands


@dataclass(frozen=True)
class RegOperand:
    """Architectural register access; ssa_index None until renaming runs."""

    name: str
    width: int
    ssa_index: Optional[int] = None

    def __post_init__(self):
        if self.width not in REG_WIDTHS:
            raise IrError(f"bad register width {self.width} for {self.name}")
        if self.ssa_index is not None and self.ssa_index < 0:
            raise IrError(f"negative ssa_index for {self.name}")

    def render(self) -> str:
        if self.ssa_index is None:
            return self.name
        return f"{self.name}_{self.ssa_index}"


@dataclass(frozen=True)
class TempOperand:
    id: int
    width: int

    def __post_init__(self):
        if self.id < 0:
            raise IrError(f"negative temp id {self.id}")
        if self.width not in VALUE_WIDTHS:
            raise IrError(f"bad temp width {self.width}")

    def render(self) -> str:
        return f"t{self.id}"


@dataclass(frozen=True)
class ConstOperand:
    value: int
    width: int

    def __post_init__(self):
        if self.width not in VALUE_WIDTHS:
            raise IrError(f"bad constant width {self.width}")
        if not 0 <= self.value < (1 << self.width):
            raise IrError(f"constant {self.value:#x} out of range for width {self.width}")

    def render(self) -> str:
        return f"{self.value:#x}"


# ---------------------------------------------------------------------------
# Expressions


@dataclass(frozen=True)
class Const:
    const: ConstOperand


@dataclass(frozen=True)
class RdTmp:
    tmp: TempOperand


@dataclass(frozen=True)
class GetReg:
    reg: RegOperand


@dataclass(frozen=True)
class Op:
    opcode: str
    args: tuple["MicroExpr", ...]

    def __post_init__(self):
        arity, _, _ = opcode_signature(self.opcode)
        if arity != len(self.args):
            raise IrError(
                f"{self.opcode} expects {arity} args, got {len(self.args)}"
            )


@dataclass(frozen=True)
class Load:
    addr: "MicroExpr"
    width: int

    def __post_init__(self):
        if self.width not in VALUE_WIDTHS:
            raise IrError(f"bad load width {self.width}")


MicroExpr = Union[Const, RdTmp, GetReg, Op, Load]


# ---------------------------------------------------------------------------
# Statements


@dataclass(frozen=True)
class WrTmp:
    dst: TempOperand
    rhs: MicroExpr


@dataclass(frozen=True)
class PutReg:
    dst: RegOperand
    rhs: MicroExpr


@dataclass(frozen=True)
class Store:
    addr: MicroExpr
    data: MicroExpr


@dataclass(frozen=True)
class Exit:
    guard: MicroExpr
    target: int


@dataclass(frozen=True)
class IMark:
    addr: int
    length: int


@dataclass(frozen=True)
class Opaque:
    mnemonic: str


MicroStmt = Union[WrTmp, PutReg, Store, Exit, IMark, Opaque]


EDGE_KINDS = ("fallthrough", "jump", "branch_taken", "call", "return")


@dataclass
class BasicBlock:
    """Straight-line statement list plus outgoing (address, edge kind) pairs."""

    addr: int
    stmts: list[MicroStmt] = field(default_factory=list)
    successors: list[tuple[int, str]] = field(default_factory=list)
    # byte range end, used only while carving blocks out of an image
    end: Optional[int] = None


# ---------------------------------------------------------------------------
# Opcode signature table

_BINOPS = ("Add", "Sub", "And", "Or", "Xor", "Mul", "DivS", "DivU", "ModS", "ModU")
_SHIFTS = ("Shl", "Shr", "Sar")
_CMPS = ("CmpEQ", "CmpNE", "CmpLTS", "CmpLTU", "CmpLES", "CmpLEU")
_UNOPS = ("Not", "Neg")


def _build_table() -> dict[str, tuple[int, tuple[int, ...], int]]:
    table: dict[str, tuple[int, tuple[int, ...], int]] = {}
    for w in REG_WIDTHS:
        for name in _BINOPS:
            table[f"{name}{w}"] = (2, (w, w), w)
        for name in _SHIFTS:
            # shift amounts are byte-sized, as in the machine encoding
            table[f"{name}{w}"] = (2, (w, 8), w)
        for name in _CMPS:
            table[f"{name}{w}"] = (2, (w, w), 1)
        for name in _UNOPS:
            table[f"{name}{w}"] = (1, (w,), w)
    for src in VALUE_WIDTHS:
        for dst in VALUE_WIDTHS:
            if src < dst:
                table[f"{src}Uto{dst}"] = (1, (src,), dst)
                table[f"{src}Sto{dst}"] = (1, (src,), dst)
            elif src > dst:
                table[f"{src}to{dst}"] = (1, (src,), dst)
    return table


OPCODE_TABLE = _build_table()


def opcode_signature(opcode: str) -> tuple[int, tuple[int, ...], int]:
    """(arity, argument widths, result width) for a supported opcode."""
    try:
        return OPCODE_TABLE[opcode]
    except KeyError:
        raise SignatureError(f"unknown opcode: {opcode}") from None


def expr_width(expr: MicroExpr) -> int:
    if isinstance(expr, Const):
        return expr.const.width
    if isinstance(expr, RdTmp):
        return expr.tmp.width
    if isinstance(expr, GetReg):
        return expr.reg.width
    if isinstance(expr, Load):
        return expr.width
    if isinstance(expr, Op):
        return opcode_signature(expr.opcode)[2]
    raise IrError(f"not an expression: {expr!r}")


# ---------------------------------------------------------------------------
# Rendering


def render(entity) -> str:
    """Canonical one-line text for a statement, expression or operand.

    Deterministic: structurally equal entities always produce equal text.
    Constants are lowercase hex, registers keep their SSA suffix only while
    one is attached.
    """
    if isinstance(entity, (RegOperand, TempOperand, ConstOperand)):
        return entity.render()
    if isinstance(entity, Const):
        return entity.const.render()
    if isinstance(entity, RdTmp):
        return entity.tmp.render()
    if isinstance(entity, GetReg):
        return entity.reg.render()
    if isinstance(entity, Op):
        return f"{entity.opcode}({','.join(render(a) for a in entity.args)})"
    if isinstance(entity, Load):
        return f"Load{entity.width}({render(entity.addr)})"
    if isinstance(entity, WrTmp):
        return f"{entity.dst.render()} = {render(entity.rhs)}"
    if isinstance(entity, PutReg):
        return f"{entity.dst.render()} = {render(entity.rhs)}"
    if isinstance(entity, Store):
        return f"Store({render(entity.addr)},{render(entity.data)})"
    if isinstance(entity, Exit):
        return f"Exit({render(entity.guard)},{entity.target:#x})"
    if isinstance(entity, IMark):
        return f"IMark({entity.addr:#x},{entity.length})"
    if isinstance(entity, Opaque):
        return f"Opaque({entity.mnemonic})"
    raise IrError(f"cannot render {entity!r}")


def render_block(block: BasicBlock) -> list[str]:
    return [render(s) for s in block.stmts]


# ---------------------------------------------------------------------------
# Block-level checks


def check_block_ssa(block: BasicBlock) -> list[str]:
    """Violations of block-local single assignment; empty list when clean."""
    problems = []
    written: set[int] = set()
    for stmt in block.stmts:
        if isinstance(stmt, WrTmp):
            if stmt.dst.id in written:
                problems.append(
                    f"block {block.addr:#x}: t{stmt.dst.id} written twice"
                )
            written.add(stmt.dst.id)
    return problems
