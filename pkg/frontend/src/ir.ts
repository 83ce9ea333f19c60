// Statement/expression object model mirroring the .b2v.jsonl v1 schema.
// Key order inside each object is part of the wire format: JSON.stringify
// preserves insertion order, so constructors below list keys canonically.

export type Width = 1 | 8 | 16 | 32 | 64;

export interface ConstExpr { kind: "Const"; value: string; width: Width; }
export interface RdTmpExpr { kind: "RdTmp"; tmp: string; width: Width; }
export interface GetRegExpr { kind: "GetReg"; reg: string; width: Width; }
export interface OpExpr { kind: "Op"; op: string; args: Expr[]; }
export interface LoadExpr { kind: "Load"; width: Width; addr: Expr; }
export type Expr = ConstExpr | RdTmpExpr | GetRegExpr | OpExpr | LoadExpr;

export interface WrTmpStmt { kind: "WrTmp"; tmp: string; expr: Expr; }
export interface PutRegStmt { kind: "PutReg"; reg: string; width: Width; expr: Expr; }
export interface StoreStmt { kind: "Store"; addr: Expr; data: Expr; }
export interface ExitStmt { kind: "Exit"; guard: Expr; target: string; }
export interface IMarkStmt { kind: "IMark"; addr: string; len: number; }
export interface OpaqueStmt { kind: "Opaque"; mnemonic: string; }
export type Stmt = WrTmpStmt | PutRegStmt | StoreStmt | ExitStmt | IMarkStmt | OpaqueStmt;

export interface DumpBlock { addr: string; stmts: Stmt[]; successors: string[]; }

export interface ProgramDump {
  v: 1;
  binary_id: string;
  arch: string;
  label: string | number | null;
  blocks: DumpBlock[];
}

export function hex(value: number | bigint): string {
  return "0x" + value.toString(16);
}

export function constExpr(value: bigint, width: Width): ConstExpr {
  const mask = (1n << BigInt(width)) - 1n;
  return { kind: "Const", value: hex(value & mask), width };
}

export function rdTmp(id: number, width: Width): RdTmpExpr {
  return { kind: "RdTmp", tmp: `t${id}`, width };
}

export function getReg(reg: string, width: Width): GetRegExpr {
  return { kind: "GetReg", reg, width };
}

export function op(name: string, args: Expr[]): OpExpr {
  return { kind: "Op", op: name, args };
}

export function load(width: Width, addr: Expr): LoadExpr {
  return { kind: "Load", width, addr };
}

export function exprWidth(e: Expr): Width {
  switch (e.kind) {
    case "Const": return e.width;
    case "RdTmp": return e.width;
    case "GetReg": return e.width;
    case "Load": return e.width;
    case "Op": return opResultWidth(e.op);
  }
}

const CMP_RE = /^Cmp(EQ|NE|LTS|LTU|LES|LEU)(\d+)$/;
const CONV_RE = /^(\d+)(U|S)?to(\d+)$/;

export function opResultWidth(name: string): Width {
  const cmp = CMP_RE.exec(name);
  if (cmp) return 1;
  const conv = CONV_RE.exec(name);
  if (conv) return Number(conv[3]) as Width;
  const tail = /(\d+)$/.exec(name);
  if (!tail) throw new Error(`cannot infer result width of opcode ${name}`);
  return Number(tail[1]) as Width;
}

export function encodeDump(dump: ProgramDump): string {
  // object literal spreads keep the canonical key order of the schema
  const blocks = [...dump.blocks]
    .sort((a, b) => Number(BigInt(a.addr) - BigInt(b.addr)))
    .map((b) => ({ addr: b.addr, stmts: b.stmts, successors: b.successors }));
  return JSON.stringify({
    v: dump.v,
    binary_id: dump.binary_id,
    arch: dump.arch,
    label: dump.label,
    blocks,
  });
}
