"""Desk-scale training corpus: tiny C programs compiled at -O0.

Six algorithm families, each rendered into many source variants through
seeded jitter: loop style, index and element widths, identifier names,
literal values, helper decomposition, dead arithmetic both outside and
inside the hot loops (the messy-code variability of human-written
solutions), stack-frame layout shifts, and a little compiler-flag
variation. Everything is deterministic in the corpus seed.
"""

from __future__ import annotations

import random
import subprocess
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .train import ManifestEntry, write_manifest

_NAMES = ("acc", "box", "cur", "data", "edge", "flag", "grid", "head",
          "item", "keep", "lane", "mark", "node", "pivot", "qty", "rank",
          "slot", "tmpv", "units", "width")

_FLAG_SETS = (
    (),
    ("-fno-stack-protector",),
    ("-fcf-protection=none",),
    ("-fno-stack-protector", "-fcf-protection=none"),
)


class _Gen:
    """Per-variant naming and jitter helper."""

    def __init__(self, rng: random.Random):
        self.rng = rng
        names = list(_NAMES)
        rng.shuffle(names)
        self._names = iter(names)
        self.int_t = rng.choice(("int", "long"))
        self.elem_t = rng.choice(("int", "long", "short"))
        self.mix_var = self.name()

    def name(self) -> str:
        return next(self._names)

    def lit(self, lo=3, hi=59999) -> int:
        return self.rng.randrange(lo, hi)

    def array_init(self, n: int) -> str:
        return ", ".join(str(self.lit()) for _ in range(n))

    def loop_noise(self, expr: str) -> str:
        """0-2 tracking statements inside a hot loop body."""
        forms = (
            f"{self.mix_var} += ({expr}) ^ {self.lit()};",
            f"{self.mix_var} ^= ({expr}) + {self.lit()};",
            f"{self.mix_var} = ({self.mix_var} << 1) ^ ({expr});",
            f"{self.mix_var} += {self.lit(1, 250)};",
        )
        count = self.rng.randrange(0, 3)
        return " ".join(self.rng.choice(forms) for _ in range(count))

    def noise(self, var: str) -> str:
        lines = []
        for _ in range(self.rng.randrange(0, 4)):
            kind = self.rng.randrange(3)
            if kind == 0:
                lines.append(f"    {var} ^= {self.lit()};")
            elif kind == 1:
                lines.append(f"    {var} = ({var} << 1) + {self.lit(1, 9)};")
            else:
                lines.append(f"    {var} += {self.lit()};")
        return "\n".join(lines)

    def decoys(self) -> tuple[str, str]:
        """Unused-but-initialized locals that jitter the stack frame layout."""
        decls = []
        uses = []
        for i in range(self.rng.randrange(0, 7)):
            ty = self.rng.choice(("int", "long", "short"))
            name = f"pad{i}"
            decls.append(f"    {ty} {name} = {self.lit(1, 999)};")
            uses.append(f"({name} & 1)")
        return "\n".join(decls), (" + ".join(uses) if uses else "0")


def _wrap(g: _Gen, body: str, result: str, helpers: str = "") -> str:
    noise_var = g.name()
    decls, uses = g.decoys()
    return f"""volatile long sink;
{helpers}
int main(void) {{
{decls}
    long {noise_var} = {g.lit()};
    long {g.mix_var} = {g.lit(1, 99)};
{body}
{g.noise(noise_var)}
    sink = (long)({result}) + ({noise_var} & 1) + ({g.mix_var} & 3) + {uses};
    return (int)(sink & 0x7f);
}}
"""


def _checksum(g: _Gen, arr: str, n: int, out: str) -> str:
    i = g.name()
    return (f"    long {out} = 0;\n"
            f"    for ({g.int_t} {i} = 0; {i} < {n}; {i}++) {{\n"
            f"        {out} += {arr}[{i}] * ({i} + 1);\n"
            f"    }}")


def _gen_bubble(g: _Gen) -> str:
    arr, i, j, t = g.name(), g.name(), g.name(), g.name()
    n = g.rng.randrange(8, 17)
    it, et = g.int_t, g.elem_t
    bound = f"{n} - 1 - {i}" if g.rng.random() < 0.5 else f"{n} - ({i} + 1)"
    if g.rng.random() < 0.5:
        swap = (f"                {et} {t} = {arr}[{j}];\n"
                f"                {arr}[{j}] = {arr}[{j} + 1];\n"
                f"                {arr}[{j} + 1] = {t};")
    else:
        swap = (f"                {arr}[{j}] ^= {arr}[{j} + 1];\n"
                f"                {arr}[{j} + 1] ^= {arr}[{j}];\n"
                f"                {arr}[{j}] ^= {arr}[{j} + 1];")
    body = (f"    {et} {arr}[{n}] = {{{g.array_init(n)}}};\n"
            f"    for ({it} {i} = 0; {i} < {n} - 1; {i}++)\n"
            f"        for ({it} {j} = 0; {j} < {bound}; {j}++) {{\n"
            f"            {g.loop_noise(f'{arr}[{j}]')}\n"
            f"            if ({arr}[{j}] > {arr}[{j} + 1]) {{\n{swap}\n            }}\n"
            f"        }}\n"
            + _checksum(g, arr, n, "total"))
    return _wrap(g, body, "total")


def _gen_selection(g: _Gen) -> str:
    arr, i, j, best, t = g.name(), g.name(), g.name(), g.name(), g.name()
    n = g.rng.randrange(8, 17)
    it, et = g.int_t, g.elem_t
    body = (f"    {et} {arr}[{n}] = {{{g.array_init(n)}}};\n"
            f"    for ({it} {i} = 0; {i} < {n} - 1; {i}++) {{\n"
            f"        {it} {best} = {i};\n"
            f"        for ({it} {j} = {i} + 1; {j} < {n}; {j}++) {{\n"
            f"            {g.loop_noise(f'{arr}[{j}]')}\n"
            f"            if ({arr}[{j}] < {arr}[{best}])\n"
            f"                {best} = {j};\n"
            f"        }}\n"
            f"        {et} {t} = {arr}[{i}];\n"
            f"        {arr}[{i}] = {arr}[{best}];\n"
            f"        {arr}[{best}] = {t};\n"
            f"    }}\n"
            + _checksum(g, arr, n, "total"))
    return _wrap(g, body, "total")


def _gen_insertion(g: _Gen) -> str:
    arr, i, j, key = g.name(), g.name(), g.name(), g.name()
    n = g.rng.randrange(8, 17)
    it, et = g.int_t, g.elem_t
    body = (f"    {et} {arr}[{n}] = {{{g.array_init(n)}}};\n"
            f"    for ({it} {i} = 1; {i} < {n}; {i}++) {{\n"
            f"        {et} {key} = {arr}[{i}];\n"
            f"        {it} {j} = {i} - 1;\n"
            f"        while ({j} >= 0 && {arr}[{j}] > {key}) {{\n"
            f"            {g.loop_noise(f'{arr}[{j}]')}\n"
            f"            {arr}[{j} + 1] = {arr}[{j}];\n"
            f"            {j} = {j} - 1;\n"
            f"        }}\n"
            f"        {arr}[{j} + 1] = {key};\n"
            f"    }}\n"
            + _checksum(g, arr, n, "total"))
    return _wrap(g, body, "total")


def _gen_gcd(g: _Gen) -> str:
    a, b, t, fn = g.name(), g.name(), g.name(), g.name()
    it = g.int_t
    pairs = [(g.lit(100, 59999), g.lit(100, 59999)) for _ in range(g.rng.randrange(2, 5))]
    if g.rng.random() < 0.5:
        helpers = (f"static {it} {fn}({it} {a}, {it} {b}) {{\n"
                   f"    while ({b} != 0) {{\n"
                   f"        {it} {t} = {a} % {b};\n"
                   f"        {a} = {b};\n"
                   f"        {b} = {t};\n"
                   f"    }}\n"
                   f"    return {a};\n"
                   f"}}\n")
    else:
        helpers = (f"static {it} {fn}({it} {a}, {it} {b}) {{\n"
                   f"    if ({b} == 0)\n"
                   f"        return {a};\n"
                   f"    return {fn}({b}, {a} % {b});\n"
                   f"}}\n")
    i, total = g.name(), "total"
    k = len(pairs)
    xs = ", ".join(str(x) for x, _ in pairs)
    ys = ", ".join(str(y) for _, y in pairs)
    body = (f"    {it} xs[{k}] = {{{xs}}};\n"
            f"    {it} ys[{k}] = {{{ys}}};\n"
            f"    long {total} = 0;\n"
            f"    for ({g.int_t} {i} = 0; {i} < {k}; {i}++) {{\n"
            f"        {g.loop_noise(f'xs[{i}]')}\n"
            f"        {total} += {fn}(xs[{i}], ys[{i}]);\n"
            f"    }}")
    return _wrap(g, body, total, helpers)


def _gen_fib(g: _Gen) -> str:
    it = g.int_t
    n = g.rng.randrange(10, 40)
    if g.rng.random() < 0.5:
        a, b, t, i = g.name(), g.name(), g.name(), g.name()
        body = (f"    {it} {a} = 0, {b} = 1;\n"
                f"    for ({it} {i} = 0; {i} < {n}; {i}++) {{\n"
                f"        {g.loop_noise(b)}\n"
                f"        {it} {t} = {a} + {b};\n"
                f"        {a} = {b};\n"
                f"        {b} = {t};\n"
                f"    }}\n"
                f"    long total = {a};")
    else:
        arr, i = g.name(), g.name()
        k = g.rng.randrange(12, 24)
        body = (f"    {it} {arr}[{k}];\n"
                f"    {arr}[0] = 0;\n"
                f"    {arr}[1] = 1;\n"
                f"    for ({it} {i} = 2; {i} < {k}; {i}++) {{\n"
                f"        {g.loop_noise(f'{arr}[{i} - 1]')}\n"
                f"        {arr}[{i}] = {arr}[{i} - 1] + {arr}[{i} - 2];\n"
                f"    }}\n"
                f"    long total = {arr}[{k} - 1] + {g.lit()};")
    return _wrap(g, body, "total")


def _gen_matmul(g: _Gen) -> str:
    k = g.rng.randrange(2, 5)
    a, b, c, i, j, l = g.name(), g.name(), g.name(), g.name(), g.name(), g.name()
    it, et = g.int_t, g.elem_t
    init_a = ", ".join(f"{{{g.array_init(k)}}}" for _ in range(k))
    init_b = ", ".join(f"{{{g.array_init(k)}}}" for _ in range(k))
    if g.rng.random() < 0.5:
        inner = (f"            {et} dot = 0;\n"
                 f"            for ({it} {l} = 0; {l} < {k}; {l}++) {{\n"
                 f"                {g.loop_noise(f'{a}[{i}][{l}]')}\n"
                 f"                dot += {a}[{i}][{l}] * {b}[{l}][{j}];\n"
                 f"            }}\n"
                 f"            {c}[{i}][{j}] = dot;")
    else:
        inner = (f"            {c}[{i}][{j}] = 0;\n"
                 f"            for ({it} {l} = 0; {l} < {k}; {l}++) {{\n"
                 f"                {g.loop_noise(f'{b}[{l}][{j}]')}\n"
                 f"                {c}[{i}][{j}] += {a}[{i}][{l}] * {b}[{l}][{j}];\n"
                 f"            }}")
    body = (f"    {et} {a}[{k}][{k}] = {{{init_a}}};\n"
            f"    {et} {b}[{k}][{k}] = {{{init_b}}};\n"
            f"    {et} {c}[{k}][{k}];\n"
            f"    for ({it} {i} = 0; {i} < {k}; {i}++)\n"
            f"        for ({it} {j} = 0; {j} < {k}; {j}++) {{\n"
            f"{inner}\n"
            f"        }}\n"
            f"    long total = 0;\n"
            f"    for ({it} {i} = 0; {i} < {k}; {i}++)\n"
            f"        for ({it} {j} = 0; {j} < {k}; {j}++)\n"
            f"            total += {c}[{i}][{j}] * ({i} + {j} + 1);")
    return _wrap(g, body, "total")


FAMILIES = {
    "bubble_sort": _gen_bubble,
    "selection_sort": _gen_selection,
    "insertion_sort": _gen_insertion,
    "gcd": _gen_gcd,
    "fibonacci": _gen_fib,
    "matmul": _gen_matmul,
}


def _compile(cc: str, src: Path, out: Path, flags: tuple[str, ...]):
    cmd = [cc, "-O0", *flags, "-o", str(out), str(src)]
    proc = subprocess.run(cmd, capture_output=True, text=True)
    if proc.returncode != 0:
        raise RuntimeError(f"{' '.join(cmd)} failed:\n{proc.stderr}")


def make_corpus(out_dir, families=None, variants: int = 40, seed: int = 0,
                jobs: int = 1, cc: str = "cc") -> Path:
    """Generate, compile and list the corpus; returns the manifest path."""
    out = Path(out_dir)
    (out / "src").mkdir(parents=True, exist_ok=True)
    (out / "bin").mkdir(parents=True, exist_ok=True)
    chosen = list(FAMILIES) if families is None else list(families)

    sources = []
    entries = []
    for family in chosen:
        gen = FAMILIES[family]
        for k in range(variants):
            rng = random.Random(f"{seed}:{family}:{k}")
            source = gen(_Gen(rng))
            flags = rng.choice(_FLAG_SETS)
            src = out / "src" / f"{family}_{k:03d}.c"
            binary = out / "bin" / f"{family}_{k:03d}"
            src.write_text(source)
            sources.append((src, binary, flags))
            entries.append(ManifestEntry(path=str(binary), label=family))

    def build(item):
        src, binary, flags = item
        _compile(cc, src, binary, flags)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(build, sources))
    else:
        for item in sources:
            build(item)

    manifest = out / "manifest.csv"
    write_manifest(entries, manifest)
    return manifest
