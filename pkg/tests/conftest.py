import shutil
import subprocess
from pathlib import Path

import pytest

FIXTURE_DIR = Path(__file__).parent / "fixtures"

FIXTURE_SOURCES = {
    "straightline": """
volatile int sink;
int main(void) {
    int a = 41;
    int b = a * 3 + 7;
    sink = b ^ 0x55;
    return sink & 0x7f;
}
""",
    "branching": """
volatile int sink;
int main(void) {
    int v = 12345;
    if (v % 3 == 0)
        v = v / 3;
    else if (v > 1000)
        v -= 999;
    else
        v += 1;
    sink = v;
    return v & 0x7f;
}
""",
    "loops": """
volatile long sink;
int main(void) {
    long total = 0;
    for (int i = 0; i < 12; i++)
        for (int j = i; j < 12; j++)
            total += i * j + 1;
    sink = total;
    return (int)(total & 0x7f);
}
""",
    "calls": """
volatile int sink;
static int twice(int x) { return x + x; }
static int fact(int n) { return n <= 1 ? 1 : n * fact(n - 1); }
int main(void) {
    sink = twice(21) + fact(5);
    return sink & 0x7f;
}
""",
    "switchy": """
volatile int sink;
int main(void) {
    int v = 7, out = 0;
    switch (v) {
    case 1: out = 10; break;
    case 2: out = 20; break;
    case 3: out = 35; break;
    case 4: out = 41; break;
    case 5: out = 52; break;
    case 6: out = 66; break;
    case 7: out = 77; break;
    default: out = 1; break;
    }
    sink = out;
    return out & 0x7f;
}
""",
    "memops": """
volatile long sink;
int main(void) {
    long arr[8];
    for (int i = 0; i < 8; i++)
        arr[i] = (long)i * 3 - 1;
    long total = 0;
    for (int i = 7; i >= 0; i--)
        total += arr[i] << 1;
    sink = total;
    return (int)(total & 0x7f);
}
""",
}


@pytest.fixture(scope="session")
def cc():
    path = shutil.which("cc") or shutil.which("gcc")
    if path is None:
        pytest.skip("no C compiler available")
    return path


@pytest.fixture(scope="session")
def fixture_binaries(cc, tmp_path_factory) -> dict[str, Path]:
    out = tmp_path_factory.mktemp("bins")
    binaries = {}
    for name, source in FIXTURE_SOURCES.items():
        src = out / f"{name}.c"
        src.write_text(source)
        binary = out / name
        subprocess.run([cc, "-O0", "-o", str(binary), str(src)],
                       check=True, capture_output=True)
        binaries[name] = binary
    return binaries


@pytest.fixture(scope="session")
def fixture_dumps() -> dict[str, Path]:
    return {p.name.removesuffix(".b2v.jsonl"): p
            for p in sorted(FIXTURE_DIR.glob("*.b2v.jsonl"))}


@pytest.fixture(scope="session")
def fixture_programs(fixture_binaries, fixture_dumps):
    """Every fixture, lifted or parsed, as Program objects keyed by name."""
    from b2v.interchange import read_dump
    from b2v.lifter import lift_binary

    programs = {}
    for name, path in fixture_binaries.items():
        programs[name] = lift_binary(path.read_bytes(), binary_id=name)
    for name, path in fixture_dumps.items():
        programs[f"dump:{name}"] = read_dump(path)[0]
    return programs
