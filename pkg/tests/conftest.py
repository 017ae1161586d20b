"""Acceptance bookkeeping: every criterion reports one PASS/FAIL line in the terminal summary."""

import time
from contextlib import contextmanager

import pytest

_RESULTS: list[tuple[str, bool, float, str]] = []


class _Criterion:
    def __init__(self):
        self.notes = []

    def note(self, text: str) -> None:
        self.notes.append(text)

    @contextmanager
    def __call__(self, label: str, budget_s: float):
        start = time.perf_counter()
        ok, reason = False, ""
        try:
            yield self
            elapsed = time.perf_counter() - start
            assert elapsed < budget_s, f"runtime {elapsed:.1f}s exceeds {budget_s:g}s"
            ok = True
        except BaseException as exc:
            reason = f"{type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''}"
            raise
        finally:
            elapsed = time.perf_counter() - start
            detail = "; ".join(self.notes) if ok else reason
            _RESULTS.append((label, ok, elapsed, detail))
            line = f"{label}: {'PASS' if ok else 'FAIL'} ({elapsed:.2f}s) {detail}"
            print(line)


@pytest.fixture
def criterion():
    return _Criterion()


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for label, ok, elapsed, detail in sorted(_RESULTS, key=lambda r: int(r[0].split()[1])):
        terminalreporter.write_line(f"{label}: {'PASS' if ok else 'FAIL'} ({elapsed:.2f}s) {detail}")
