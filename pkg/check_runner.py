#!/usr/bin/env python
"""
Shared PASS/FAIL runner for the test_*.py scripts
Each script's main() hands its test functions here; pytest collects the same
functions directly. Tests that need pytest-only fixtures (capsys, monkeypatch)
are skipped when run as a script.
"""
import sys
import os
import inspect
import tempfile
import traceback
from pathlib import Path
from typing import Callable, List, Tuple

# Fix Windows console encoding
if sys.platform == 'win32':
    os.system('chcp 65001 >nul 2>&1')
    sys.stdout.reconfigure(encoding='utf-8', errors='replace')

SUPPORTED_FIXTURES = {"tmp_path"}


def _fixtures(test: Callable) -> List[str]:
    return list(inspect.signature(test).parameters)


def _call(test: Callable) -> None:
    # tests that take pytest's tmp_path get a fresh directory here
    if "tmp_path" in _fixtures(test):
        with tempfile.TemporaryDirectory() as tmp:
            test(Path(tmp))
    else:
        test()


def run_tests(title: str, tests: List[Callable]) -> int:
    """Run every test, print a summary, return a process exit code"""
    print("="*60)
    print(title)
    print("="*60)

    results: List[Tuple[str, str]] = []
    for test in tests:
        missing = set(_fixtures(test)) - SUPPORTED_FIXTURES
        if missing:
            print(f"[SKIP] {test.__name__}: needs pytest fixture(s) {', '.join(sorted(missing))}")
            results.append((test.__name__, "SKIP"))
            continue
        try:
            _call(test)
            results.append((test.__name__, "PASS"))
        except Exception:
            print(f"\n✗ {test.__name__}")
            traceback.print_exc()
            results.append((test.__name__, "FAIL"))

    print("\n" + "="*60)
    print("TEST SUMMARY")
    print("="*60)

    symbols = {"PASS": "✓", "FAIL": "✗", "SKIP": "-"}
    for name, status in results:
        print(f"{symbols[status]} {name}: {status}")

    passed = sum(1 for _, status in results if status == "PASS")
    failed = sum(1 for _, status in results if status == "FAIL")
    print(f"\nTotal: {passed}/{len(results)} tests passed")
    if failed == 0:
        print("\n✓ All tests passed!")
        return 0
    print(f"\n✗ {failed} test(s) failed")
    return 1
