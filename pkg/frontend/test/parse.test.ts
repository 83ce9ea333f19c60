import assert from "node:assert/strict";
import { test } from "node:test";

import { parseOperand } from "../src/lift.js";
import { parseListing } from "../src/objdump.js";

test("register operands carry widths", () => {
  assert.deepEqual(parseOperand("rax"), { kind: "reg", name: "rax", width: 64 });
  assert.deepEqual(parseOperand("r9d"), { kind: "reg", name: "r9d", width: 32 });
  assert.deepEqual(parseOperand("al"), { kind: "reg", name: "al", width: 8 });
});

test("immediates parse as bigints", () => {
  assert.deepEqual(parseOperand("0x1f"), { kind: "imm", value: 0x1fn, width: 64 });
  assert.deepEqual(parseOperand("1"), { kind: "imm", value: 1n, width: 64 });
});

test("memory operands decompose", () => {
  const m = parseOperand("DWORD PTR [rbp-0x8]");
  assert.deepEqual(m, { kind: "mem", base: "rbp", index: null, scale: 1,
    disp: -8n, ripRelative: false, width: 32 });
  const sib = parseOperand("QWORD PTR [rax+rdx*4+0x10]");
  assert.deepEqual(sib, { kind: "mem", base: "rax", index: "rdx", scale: 4,
    disp: 16n, ripRelative: false, width: 64 });
  const rip = parseOperand("[rip+0x2eba]");
  assert.deepEqual(rip, { kind: "mem", base: null, index: null, scale: 1,
    disp: 0x2ebAn, ripRelative: true, width: null });
  const seg = parseOperand("QWORD PTR fs:0x28");
  assert.deepEqual(seg, { kind: "mem", base: null, index: null, scale: 1,
    disp: 0x28n, ripRelative: false, width: 64 }); // segment base ignored
});

const SNIPPET = `
/tmp/t1:     file format elf64-x86-64

Disassembly of section .text:

0000000000001129 <main>:
    1129:\tf3 0f 1e fa          \tendbr64
    112d:\t55                   \tpush   rbp
    1131:\t48 b8 11 22 33 44 55 \tmovabs rax,0xffeeddccbbaa5544
    1138:\t66 77 ee ff
    113f:\teb 0a                \tjmp    114b <main+0x22>
    1141:\t8b 45 fc             \tmov    eax,DWORD PTR [rbp-0x4]
    1144:\t0f 0b                \t(bad)
    114b:\t48 8b 05 d9 2f 00 00 \tmov    rax,QWORD PTR [rip+0x2fd9]        # 3fe8 <x@Base>
`;

test("listing parse handles continuations, targets, comments, bad", () => {
  const { symbols, insns } = parseListing(SNIPPET);
  assert.equal(symbols.get(0x1129), "main");
  assert.equal(insns.get(0x1129)!.mnemonic, "endbr64");
  assert.equal(insns.get(0x1129)!.length, 4);
  // continuation line folded into movabs
  assert.equal(insns.get(0x1131)!.length, 11);
  assert.equal(insns.get(0x113f)!.target, 0x114b);
  assert.equal(insns.get(0x1144)!.bad, true);
  const ripMov = insns.get(0x114b)!;
  assert.equal(ripMov.target, null); // indirect loads are not branch targets
  assert.ok(!ripMov.operands.includes("#"));
});
