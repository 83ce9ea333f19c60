// Usage: node dist/src/cli.js <binary> [-o out.b2v.jsonl] [--arch-check] [--label L]

import { writeFileSync } from "node:fs";
import { exit } from "node:process";

import { auditOpaque, exportBinary } from "./export.js";
import { encodeDump } from "./ir.js";
import { ToolchainError, readHeader } from "./objdump.js";

function main(argv: string[]): number {
  let input: string | null = null;
  let output: string | null = null;
  let archCheckOnly = false;
  let label: string | null = null;

  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    if (arg === "-o") output = argv[++i];
    else if (arg === "--arch-check") archCheckOnly = true;
    else if (arg === "--label") label = argv[++i];
    else if (arg.startsWith("-")) {
      console.error(`unknown flag ${arg}`);
      return 2;
    } else if (input === null) input = arg;
    else {
      console.error("exactly one input binary expected");
      return 2;
    }
  }
  if (input === null) {
    console.error("usage: cli.js <binary> [-o out.b2v.jsonl] [--arch-check] [--label L]");
    return 2;
  }

  try {
    if (archCheckOnly) {
      const header = readHeader(input);
      if (header.elfClass !== "ELF64" || !/X86-64/i.test(header.machine)) {
        console.error(`unsupported: ${header.elfClass} ${header.machine}`);
        return 3;
      }
      console.log(`${header.elfClass} ${header.machine} entry=0x${header.entry.toString(16)}`);
      return 0;
    }
    const dump = exportBinary(input, label);
    const target = output ?? input + ".b2v.jsonl";
    writeFileSync(target, encodeDump(dump) + "\n", "utf-8");
    const audit = auditOpaque(dump);
    const top = Object.entries(audit.mnemonics)
      .sort((a, b) => b[1] - a[1]).slice(0, 8)
      .map(([m, n]) => `${m}=${n}`).join(" ");
    console.log(`wrote ${target} (${dump.blocks.length} blocks)`);
    console.error(`opaque statements: ${audit.opaque}/${audit.total}` +
      (top ? ` [${top}]` : ""));
    return 0;
  } catch (err) {
    if (err instanceof ToolchainError) {
      console.error(String(err.message));
      return /unsupported architecture/.test(err.message) ? 3 : 1;
    }
    console.error(String(err));
    return 1;
  }
}

exit(main(process.argv.slice(2)));
