from collections import defaultdict

import pytest

# criterion number -> (title, [(check, passed, detail)])
_ACCEPTANCE = defaultdict(lambda: ["", []])


@pytest.fixture
def record():
    """``record(n, title, check, passed, detail)`` notes one sub-check of acceptance criterion ``n``."""
    def _record(n, title, check, passed, detail=""):
        entry = _ACCEPTANCE[n]
        entry[0] = title
        entry[1].append((check, bool(passed), detail))
        print(f"criterion {n} {check}: {'PASS' if passed else 'FAIL'} {detail}")
        return bool(passed)
    return _record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        title, checks = _ACCEPTANCE[n]
        ok = all(p for _, p, _ in checks)
        failed = [f"{c} ({d})" for c, p, d in checks if not p]
        line = f"criterion {n} [{title}]: {'PASS' if ok else 'FAIL'} ({sum(p for _, p, _ in checks)}/{len(checks)} checks)"
        if failed:
            line += "; failing: " + "; ".join(failed)
        tr.write_line(line)
