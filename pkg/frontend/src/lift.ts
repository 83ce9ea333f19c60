// Mapping table from objdump's Intel-syntax instructions to micro-IR
// statements. A core integer subset is translated structurally; anything
// else degrades to a single opaque statement carrying the mnemonic.

import {
  Expr,
  Stmt,
  Width,
  constExpr,
  exprWidth,
  getReg,
  hex,
  load,
  op,
  rdTmp,
} from "./ir.js";
import { InsnRecord } from "./objdump.js";

const FAMILIES: Record<string, [string, string, string, string]> = {
  rax: ["rax", "eax", "ax", "al"], rbx: ["rbx", "ebx", "bx", "bl"],
  rcx: ["rcx", "ecx", "cx", "cl"], rdx: ["rdx", "edx", "dx", "dl"],
  rsp: ["rsp", "esp", "sp", "spl"], rbp: ["rbp", "ebp", "bp", "bpl"],
  rsi: ["rsi", "esi", "si", "sil"], rdi: ["rdi", "edi", "di", "dil"],
};
for (let i = 8; i < 16; i++) {
  FAMILIES[`r${i}`] = [`r${i}`, `r${i}d`, `r${i}w`, `r${i}b`];
}

const REG_WIDTH = new Map<string, Width>();
for (const [w64, w32, w16, w8] of Object.values(FAMILIES)) {
  REG_WIDTH.set(w64, 64);
  REG_WIDTH.set(w32, 32);
  REG_WIDTH.set(w16, 16);
  REG_WIDTH.set(w8, 8);
}
for (const high of ["ah", "bh", "ch", "dh"]) REG_WIDTH.set(high, 8);
REG_WIDTH.set("rip", 64);

const PTR_WIDTH: Record<string, Width> = {
  BYTE: 8, WORD: 16, DWORD: 32, QWORD: 64,
};

export type Operand =
  | { kind: "reg"; name: string; width: Width }
  | { kind: "imm"; value: bigint; width: Width }
  | { kind: "mem"; base: string | null; index: string | null; scale: number;
      disp: bigint; ripRelative: boolean; width: Width | null };

const MEM_RE = /^(?:(BYTE|WORD|DWORD|QWORD) PTR )?(?:(\w+):)?\[([^\]]+)\]$/;
const SEG_ABS_RE = /^(BYTE|WORD|DWORD|QWORD) PTR \w+:(0x[0-9a-f]+|\d+)$/;

export function parseOperand(text: string): Operand | null {
  text = text.trim();
  const width = REG_WIDTH.get(text);
  if (width !== undefined) return { kind: "reg", name: text, width };
  if (/^-?(0x[0-9a-f]+|\d+)$/.test(text)) {
    let value = BigInt(text);
    if (value < 0n) value += 1n << 64n;
    return { kind: "imm", value, width: 64 };
  }
  // segment-absolute (fs:0x28 style): treated as an absolute address
  const seg = SEG_ABS_RE.exec(text);
  if (seg) {
    return { kind: "mem", base: null, index: null, scale: 1,
             disp: BigInt(seg[2]), ripRelative: false,
             width: PTR_WIDTH[seg[1]] };
  }
  const m = MEM_RE.exec(text);
  if (!m) return null;
  const w = m[1] ? PTR_WIDTH[m[1]] : null;
  let base: string | null = null;
  let index: string | null = null;
  let scale = 1;
  let disp = 0n;
  let ripRelative = false;
  const expr = m[3];
  // pieces look like rbp, rax*4, 0x10, rip, each joined by + or -
  for (const piece of expr.split(/(?=[+-])/)) {
    const sign = piece.startsWith("-") ? -1n : 1n;
    const term = piece.replace(/^[+-]/, "");
    const mul = /^(\w+)\*(\d+)$/.exec(term);
    if (mul) {
      index = mul[1];
      scale = Number(mul[2]);
    } else if (term === "rip") {
      ripRelative = true;
    } else if (REG_WIDTH.has(term)) {
      if (base === null) base = term;
      else { index = term; scale = 1; }
    } else if (/^(0x[0-9a-f]+|\d+)$/.test(term)) {
      disp += sign * BigInt(term);
    } else {
      return null;
    }
  }
  return { kind: "mem", base, index, scale, disp, ripRelative, width: w };
}

export interface TempCounter { next: number; }

class Emitter {
  stmts: Stmt[] = [];

  constructor(private insn: InsnRecord, private temps: TempCounter) {}

  spill(e: Expr, width: Width): Expr {
    const id = this.temps.next++;
    this.stmts.push({ kind: "WrTmp", tmp: `t${id}`, expr: e });
    return rdTmp(id, width);
  }

  readReg(name: string, width: Width): Expr {
    return this.spill(getReg(name, width), width);
  }

  memAddr(m: Operand & { kind: "mem" }): Expr {
    if (m.ripRelative) {
      const next = BigInt(this.insn.addr + this.insn.length);
      return constExpr(next + m.disp, 64);
    }
    let expr: Expr | null = null;
    if (m.base) expr = this.readReg(m.base, 64);
    if (m.index) {
      let idx = this.readReg(m.index, 64);
      if (m.scale > 1) {
        const shift = BigInt(Math.log2(m.scale));
        idx = this.spill(op("Shl64", [idx, constExpr(shift, 8)]), 64);
      }
      expr = expr === null ? idx : this.spill(op("Add64", [expr, idx]), 64);
    }
    if (expr === null) return constExpr(m.disp, 64);
    if (m.disp > 0n) return this.spill(op("Add64", [expr, constExpr(m.disp, 64)]), 64);
    if (m.disp < 0n) return this.spill(op("Sub64", [expr, constExpr(-m.disp, 64)]), 64);
    return expr;
  }

  read(operand: Operand, width: Width): Expr {
    if (operand.kind === "reg") return this.readReg(operand.name, operand.width);
    if (operand.kind === "imm") return constExpr(operand.value, width);
    return this.spill(load((operand.width ?? width) as Width, this.memAddr(operand)), (operand.width ?? width) as Width);
  }

  write(operand: Operand, value: Expr, width: Width): void {
    if (operand.kind === "reg") {
      this.stmts.push({ kind: "PutReg", reg: operand.name, width: operand.width, expr: value });
    } else if (operand.kind === "mem") {
      this.stmts.push({ kind: "Store", addr: this.memAddr(operand), data: value });
    } else {
      throw new Error("cannot write an immediate");
    }
  }
}

function operandWidth(ops: Operand[]): Width {
  for (const o of ops) {
    if (o.kind === "reg") return o.width;
    if (o.kind === "mem" && o.width) return o.width;
  }
  return 64;
}

const BINOP: Record<string, string> = {
  add: "Add", sub: "Sub", and: "And", or: "Or", xor: "Xor",
  shl: "Shl", sal: "Shl", shr: "Shr", sar: "Sar",
};
const JCC = new Set(["jo", "jno", "jb", "jae", "je", "jne", "jbe", "ja",
                     "js", "jns", "jp", "jnp", "jl", "jge", "jle", "jg",
                     "jnae", "jnb", "jz", "jnz", "jna", "jnbe", "jnge",
                     "jnl", "jng", "jnle"]);

export function isJcc(mnemonic: string): boolean {
  return JCC.has(mnemonic);
}

/** Statements for one instruction; IMark first, Opaque fallback. */
export function liftInsn(insn: InsnRecord, temps?: TempCounter): Stmt[] {
  const em = new Emitter(insn, temps ?? { next: 0 });
  em.stmts.push({ kind: "IMark", addr: hex(insn.addr), len: insn.length });
  if (insn.bad) {
    em.stmts.push({ kind: "Opaque", mnemonic: "bad:objdump" });
    return em.stmts;
  }
  const mnem = insn.mnemonic;
  const rawOps = insn.operands === "" ? [] : insn.operands.split(",").map((s) => s.trim());
  const ops = rawOps.map(parseOperand);

  const opaque = () => {
    em.stmts.length = 1; // keep the IMark only
    em.stmts.push({ kind: "Opaque", mnemonic: mnem });
    return em.stmts;
  };
  const ok = (...xs: (Operand | null)[]) => xs.every((x) => x !== null);

  try {
    if (["nop", "endbr64", "endbr32", "leave", "ret", "hlt", "ud2",
         "cdqe", "cwde", "cdq", "cqo"].includes(mnem)) {
      if (mnem === "leave") {
        const rbp = em.readReg("rbp", 64);
        em.stmts.push({ kind: "PutReg", reg: "rsp", width: 64, expr: rbp });
        const val = em.spill(load(64, rbp), 64);
        const bumped = em.spill(op("Add64", [rbp, constExpr(8n, 64)]), 64);
        em.stmts.push({ kind: "PutReg", reg: "rsp", width: 64, expr: bumped });
        em.stmts.push({ kind: "PutReg", reg: "rbp", width: 64, expr: val });
      } else if (mnem === "ret") {
        const rsp = em.readReg("rsp", 64);
        em.spill(load(64, rsp), 64);
        const bumped = em.spill(op("Add64", [rsp, constExpr(8n, 64)]), 64);
        em.stmts.push({ kind: "PutReg", reg: "rsp", width: 64, expr: bumped });
      } else if (mnem === "cdqe") {
        const eax = em.readReg("eax", 32);
        em.stmts.push({ kind: "PutReg", reg: "rax", width: 64,
                        expr: em.spill(op("32Sto64", [eax]), 64) });
      } else if (mnem === "cwde") {
        const ax = em.readReg("ax", 16);
        em.stmts.push({ kind: "PutReg", reg: "eax", width: 32,
                        expr: em.spill(op("16Sto32", [ax]), 32) });
      } else if (mnem === "cdq") {
        const eax = em.readReg("eax", 32);
        em.stmts.push({ kind: "PutReg", reg: "edx", width: 32,
                        expr: em.spill(op("Sar32", [eax, constExpr(31n, 8)]), 32) });
      } else if (mnem === "cqo") {
        const rax = em.readReg("rax", 64);
        em.stmts.push({ kind: "PutReg", reg: "rdx", width: 64,
                        expr: em.spill(op("Sar64", [rax, constExpr(63n, 8)]), 64) });
      }
      return em.stmts;
    }

    if ((mnem === "mov" || mnem === "movabs") && ops.length === 2 && ok(...ops)) {
      const [dst, src] = ops as Operand[];
      const width = operandWidth([dst, src]);
      em.write(dst, em.read(src, width), width);
      return em.stmts;
    }

    if ((mnem === "movzx" || mnem === "movsx" || mnem === "movsxd")
        && ops.length === 2 && ok(...ops)) {
      const [dst, src] = ops as Operand[];
      if (dst.kind !== "reg") return opaque();
      const srcWidth = src.kind === "reg" ? src.width
        : src.kind === "mem" && src.width ? src.width : 32;
      const conv = mnem === "movzx" ? "U" : "S";
      const val = em.read(src, srcWidth);
      const widened = em.spill(op(`${srcWidth}${conv}to${dst.width}`, [val]), dst.width);
      em.write(dst, widened, dst.width);
      return em.stmts;
    }

    if (mnem === "lea" && ops.length === 2 && ok(...ops)) {
      const [dst, src] = ops as Operand[];
      if (dst.kind !== "reg" || src.kind !== "mem") return opaque();
      let addr = em.memAddr(src);
      if (dst.width !== 64) {
        addr = em.spill(op(`64to${dst.width}`, [addr]), dst.width);
      }
      em.write(dst, addr, dst.width);
      return em.stmts;
    }

    if (mnem in BINOP && ops.length === 2 && ok(...ops)) {
      const [dst, src] = ops as Operand[];
      const width = operandWidth([dst, src]);
      const isShift = ["shl", "sal", "shr", "sar"].includes(mnem);
      const a = em.read(dst, width);
      const b = em.read(src, isShift ? 8 : width);
      const bArg = isShift && exprWidth(b) !== 8
        ? em.spill(op(`${exprWidth(b)}to8`, [b]), 8) : b;
      const res = em.spill(op(`${BINOP[mnem]}${width}`, [a, bArg]), width);
      em.write(dst, res, width);
      return em.stmts;
    }

    if ((mnem === "cmp" || mnem === "test") && ops.length === 2 && ok(...ops)) {
      const [a, b] = ops as Operand[];
      const width = operandWidth([a, b]);
      const left = em.read(a, width);
      const right = em.read(b, width);
      if (mnem === "test") em.spill(op(`And${width}`, [left, right]), width);
      return em.stmts;
    }

    if ((mnem === "inc" || mnem === "dec") && ops.length === 1 && ok(...ops)) {
      const dst = ops[0] as Operand;
      const width = operandWidth([dst]);
      const a = em.read(dst, width);
      const name = mnem === "inc" ? "Add" : "Sub";
      em.write(dst, em.spill(op(`${name}${width}`, [a, constExpr(1n, width)]), width), width);
      return em.stmts;
    }

    if ((mnem === "neg" || mnem === "not") && ops.length === 1 && ok(...ops)) {
      const dst = ops[0] as Operand;
      const width = operandWidth([dst]);
      const a = em.read(dst, width);
      const name = mnem === "neg" ? "Neg" : "Not";
      em.write(dst, em.spill(op(`${name}${width}`, [a]), width), width);
      return em.stmts;
    }

    if (mnem === "imul" && ops.length >= 1 && ok(...ops)) {
      const width = operandWidth(ops as Operand[]);
      if (ops.length === 1) {
        const a = em.readReg(width === 64 ? "rax" : "eax", width);
        const b = em.read(ops[0] as Operand, width);
        em.stmts.push({ kind: "PutReg", reg: width === 64 ? "rax" : "eax",
                        width, expr: em.spill(op(`Mul${width}`, [a, b]), width) });
      } else {
        const dst = ops[0] as Operand;
        if (dst.kind !== "reg") return opaque();
        const a = em.read(ops.length === 3 ? (ops[1] as Operand) : dst, width);
        const b = ops.length === 3
          ? em.read(ops[2] as Operand, width)
          : em.read(ops[1] as Operand, width);
        em.write(dst, em.spill(op(`Mul${width}`, [a, b]), width), width);
      }
      return em.stmts;
    }

    if ((mnem === "idiv" || mnem === "div") && ops.length === 1 && ok(...ops)) {
      const width = operandWidth(ops as Operand[]);
      if (width === 8) return opaque();
      const acc = width === 64 ? "rax" : width === 32 ? "eax" : "ax";
      const rem = width === 64 ? "rdx" : width === 32 ? "edx" : "dx";
      const signed = mnem === "idiv" ? "S" : "U";
      const a = em.readReg(acc, width);
      const b = em.read(ops[0] as Operand, width);
      em.stmts.push({ kind: "PutReg", reg: acc, width,
                      expr: em.spill(op(`Div${signed}${width}`, [a, b]), width) });
      em.stmts.push({ kind: "PutReg", reg: rem, width,
                      expr: em.spill(op(`Mod${signed}${width}`, [a, b]), width) });
      return em.stmts;
    }

    if (mnem === "push" && ops.length === 1 && ok(...ops)) {
      const rsp = em.readReg("rsp", 64);
      const newSp = em.spill(op("Sub64", [rsp, constExpr(8n, 64)]), 64);
      em.stmts.push({ kind: "PutReg", reg: "rsp", width: 64, expr: newSp });
      const src = ops[0] as Operand;
      const value = src.kind === "reg" ? getReg(src.name, 64) : em.read(src, 64);
      em.stmts.push({ kind: "Store", addr: newSp, data: value });
      return em.stmts;
    }

    if (mnem === "pop" && ops.length === 1 && ok(...ops)) {
      const rsp = em.readReg("rsp", 64);
      const val = em.spill(load(64, rsp), 64);
      const bumped = em.spill(op("Add64", [rsp, constExpr(8n, 64)]), 64);
      em.stmts.push({ kind: "PutReg", reg: "rsp", width: 64, expr: bumped });
      em.write(ops[0] as Operand, val, 64);
      return em.stmts;
    }

    if (mnem === "call") {
      if (ops.length === 1 && ops[0] && ops[0].kind !== "imm" && insn.target === null) {
        em.read(ops[0] as Operand, 64); // materialize the indirect target
      }
      const rsp = em.readReg("rsp", 64);
      const newSp = em.spill(op("Sub64", [rsp, constExpr(8n, 64)]), 64);
      em.stmts.push({ kind: "PutReg", reg: "rsp", width: 64, expr: newSp });
      em.stmts.push({ kind: "Store", addr: newSp,
                      data: constExpr(BigInt(insn.addr + insn.length), 64) });
      return em.stmts;
    }

    if (mnem === "jmp") {
      if (insn.target === null && ops.length === 1 && ops[0]) {
        em.read(ops[0] as Operand, 64);
      }
      return em.stmts;
    }

    if (isJcc(mnem)) {
      const flags = em.readReg("rflags", 64);
      const guard = em.spill(op("CmpNE64", [flags, constExpr(0n, 64)]), 1);
      em.stmts.push({ kind: "Exit", guard, target: hex(insn.target ?? 0) });
      return em.stmts;
    }
  } catch {
    return opaque();
  }
  return opaque();
}
