import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance bookkeeping: one line per criterion in the terminal summary
_ACCEPTANCE: dict[int, list[tuple[str, bool, float, str]]] = {}


class _Recorder:
    def __init__(self, criterion: int, part: str):
        self.criterion, self.part, self.detail = criterion, part, ""

    def __enter__(self):
        import time
        self._start = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        import time
        ok = exc_type is None
        if not ok and not self.detail:
            self.detail = str(exc).splitlines()[0] if exc else exc_type.__name__
        _ACCEPTANCE.setdefault(self.criterion, []).append(
            (self.part, ok, time.perf_counter() - self._start, self.detail))
        return False


@pytest.fixture
def criterion():
    return _Recorder


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        parts = _ACCEPTANCE[n]
        ok = all(p[1] for p in parts)
        total = sum(p[2] for p in parts)
        tr.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  ({total:.2f} s)")
        for name, pok, secs, detail in parts:
            tail = f" - {detail}" if detail else ""
            tr.write_line(f"    {'ok  ' if pok else 'FAIL'} {name} ({secs:.2f} s){tail}")
