"""One test per acceptance criterion, each printing a single pass/fail line."""

import time

import pytest

from curvlab import acceptance as acc
from curvlab.cli import main

RUNTIME_LIMITS = {1: 1.0, 2: 60.0, 6: 10.0, 9: 120.0}


def run_criterion(key, capsys):
    start = time.perf_counter()
    chk = acc.CRITERIA[key](acc.DEFAULT_SEED)
    elapsed = time.perf_counter() - start
    limit = RUNTIME_LIMITS.get(key)
    in_time = limit is None or elapsed < limit
    with capsys.disabled():
        print("\n" + chk.line() + ("" if in_time else f" (took {elapsed:.1f} s, limit {limit:.0f} s)"))
    return chk, in_time


@pytest.mark.parametrize("key", range(1, 11))
def test_criterion(key, capsys):
    chk, in_time = run_criterion(key, capsys)
    passed = chk.passed
    assert passed, chk.witness
    assert in_time


def test_criterion_11_verify_twice(tmp_path, monkeypatch, capsys):
    monkeypatch.delenv("CURVLAB_SEED", raising=False)
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    main(["verify", "--seed", str(acc.DEFAULT_SEED), "--out", str(a)])
    main(["verify", "--seed", str(acc.DEFAULT_SEED), "--out", str(b)])
    same = a.read_bytes() == b.read_bytes()
    with capsys.disabled():
        print(f"\n[{'PASS' if same else 'FAIL'}] 11 verify reports byte-identical: {a.stat().st_size} bytes")
    assert same
