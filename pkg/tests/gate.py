"""Collects one PASS/FAIL line per acceptance criterion for the terminal summary."""

import time
from contextlib import contextmanager

RESULTS: dict[int, str] = {}


@contextmanager
def criterion(number: int, title: str):
    """Time the body; the body fills ``report`` with ``ok`` and ``detail``."""
    report = {"ok": False, "detail": "did not finish"}
    start = time.perf_counter()
    try:
        yield report
    finally:
        elapsed = time.perf_counter() - start
        verdict = "PASS" if report["ok"] else "FAIL"
        line = f"[{verdict}] criterion {number:2d} {title}: {report['detail']} ({elapsed:.3f} s)"
        RESULTS[number] = line
        print(line)
