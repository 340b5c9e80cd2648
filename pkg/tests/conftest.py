import functools
import time

import pytest

from secrel.pipeline import run_algorithm1
from secrel.scenario import default_config

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record(criterion: int, ok: bool, detail: str) -> None:
    """Merge one check into the summary line of a criterion (all parts must pass)."""
    prev = ACCEPTANCE.get(criterion)
    if prev is not None:
        ok, detail = prev[0] and ok, f"{prev[1]}; {detail}"
    ACCEPTANCE[criterion] = (bool(ok), detail)


def regression_configs():
    base = default_config()
    return {
        "default": base,
        "nonrobust": base.with_radii(0.0),
        "half": base.with_radii([30.0, 15.0]),
        "wide": base.with_radii([90.0, 45.0]),
        "short": default_config(slots_N=20, horizon_T=40.0),
        "no_adversary": default_config(slots_N=25, horizon_T=50.0, adversaries=[]),
    }


@functools.lru_cache(maxsize=None)
def algorithm_run(name: str):
    """(traj, pw, trace, seconds) for a named regression scenario, computed once per session."""
    cfg = regression_configs()[name]
    t0 = time.perf_counter()
    traj, pw, trace = run_algorithm1(cfg)
    return traj, pw, trace, time.perf_counter() - t0


@pytest.fixture(scope="session")
def default_cfg():
    return default_config()


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
