import assert from "node:assert/strict";
import { test } from "node:test";

import { liftInsn } from "../src/lift.js";
import { InsnRecord } from "../src/objdump.js";

function insn(mnemonic: string, operands = "", target: number | null = null,
              addr = 0x1000, length = 3): InsnRecord {
  return { addr, length, mnemonic, operands, target, bad: false };
}

test("every lift starts with an IMark", () => {
  for (const i of [insn("nop"), insn("mov", "eax,0x1"), insn("fcos")]) {
    const stmts = liftInsn(i);
    assert.equal(stmts[0].kind, "IMark");
  }
});

test("mov reg, imm is a single PutReg", () => {
  const stmts = liftInsn(insn("mov", "eax,0x2a"));
  assert.deepEqual(stmts[1], {
    kind: "PutReg", reg: "eax", width: 32,
    expr: { kind: "Const", value: "0x2a", width: 32 },
  });
});

test("push reg decomposes through rsp", () => {
  const stmts = liftInsn(insn("push", "rbx"));
  const kinds = stmts.map((s) => s.kind);
  assert.deepEqual(kinds, ["IMark", "WrTmp", "WrTmp", "PutReg", "Store"]);
});

test("unknown instruction degrades to Opaque with the mnemonic", () => {
  const stmts = liftInsn(insn("fcos"));
  assert.deepEqual(stmts[1], { kind: "Opaque", mnemonic: "fcos" });
});

test("conditional jumps exit on an rflags test", () => {
  const stmts = liftInsn(insn("jle", "114b <main+0x22>", 0x114b));
  const exit = stmts[stmts.length - 1];
  assert.equal(exit.kind, "Exit");
  assert.equal((exit as any).target, "0x114b");
  const guard = (exit as any).guard;
  assert.equal(guard.kind, "RdTmp");
  assert.equal(guard.width, 1);
});

test("memory add loads, operates, stores through one address", () => {
  const stmts = liftInsn(insn("add", "DWORD PTR [rbp-0x8],eax"));
  const stores = stmts.filter((s) => s.kind === "Store");
  assert.equal(stores.length, 1);
  assert.ok(stmts.some((s) => s.kind === "WrTmp"
    && (s as any).expr.kind === "Op" && (s as any).expr.op === "Add32"));
});

test("temp ids stay unique across one block's instructions", () => {
  const temps = { next: 0 };
  const a = liftInsn(insn("mov", "eax,DWORD PTR [rbp-0x4]"), temps);
  const b = liftInsn(insn("add", "eax,0x1"), temps);
  const written = [...a, ...b]
    .filter((s) => s.kind === "WrTmp")
    .map((s) => (s as any).tmp);
  assert.equal(new Set(written).size, written.length);
});
