import time

import pytest

_VERDICTS: dict[int, tuple[bool, str]] = {}


class Criterion:
    """Collects sub-checks for one acceptance criterion and its runtime."""

    def __init__(self, number: int, limit_s: float | None):
        self.number = number
        self.limit = limit_s
        self.checks: list[tuple[str, bool, str]] = []
        self.start = time.perf_counter()

    def check(self, name: str, ok: bool, detail: str = "") -> bool:
        self.checks.append((name, bool(ok), detail))
        return bool(ok)

    def finish(self):
        elapsed = time.perf_counter() - self.start
        if self.limit is not None:
            self.check("runtime", elapsed < self.limit, f"{elapsed:.2f}s < {self.limit:g}s")
        failed = [c for c in self.checks if not c[1]]
        parts = [f"{n}={'ok' if ok else 'FAIL'}({d})" if d else f"{n}={'ok' if ok else 'FAIL'}"
                 for n, ok, d in self.checks]
        _VERDICTS[self.number] = (not failed, "; ".join(parts))
        assert not failed, "failed sub-checks: " + ", ".join(f"{n} ({d})" for n, _, d in failed)


@pytest.fixture
def criterion():
    made = []

    def make(number, limit_s=None):
        c = Criterion(number, limit_s)
        made.append(c)
        return c

    return make


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_VERDICTS):
        ok, detail = _VERDICTS[k]
        terminalreporter.write_line(f"CRITERION {k:2d} {'PASS' if ok else 'FAIL'}  {detail}")
