import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

# criterion number -> [(passed, detail), ...] per case; filled by test_acceptance.py
ACCEPTANCE: dict[int, list[tuple[bool, str]]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        cases = ACCEPTANCE[n]
        bad = [d for ok, d in cases if not ok]
        detail = bad[0] if bad else cases[-1][1]
        count = f"[{len(cases) - len(bad)}/{len(cases)} cases] " if len(cases) > 1 else ""
        terminalreporter.write_line(f"criterion {n:>2}: {'FAIL' if bad else 'PASS'}  {count}{detail}")
