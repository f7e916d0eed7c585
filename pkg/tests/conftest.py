import numpy as np
import pytest

import mdpcg.sensitivity as sens_mod
from mdpcg.io import fixture_path, load_game

FEAS_RTOL = 1e-9
RANGE_TOL = 1e-8
STAT_RTOL = 1e-9

_original_sensitivity_at = sens_mod.sensitivity_at
CHECKED = {"count": 0}


def assert_structural(res):
    """Jacobian identities that must hold for any closed-form result."""
    r = res.residuals()
    val, scale = r["feasibility"]
    assert val <= FEAS_RTOL * scale, f"N^T dy = {val:.3e}"
    val, scale = r["range"]
    assert val <= RANGE_TOL * scale, f"dl outside range(N): {val:.3e}"
    val, scale = r["stationarity"]
    assert val <= STAT_RTOL * scale, f"G dy + J - dl = {val:.3e}"
    val, scale = r["dual_consistency"]
    assert val <= STAT_RTOL * scale, f"N ddual - dl = {val:.3e}"


def _checked_sensitivity_at(*args, **kwargs):
    res = _original_sensitivity_at(*args, **kwargs)
    assert_structural(res)
    CHECKED["count"] += 1
    return res


@pytest.fixture(autouse=True)
def _structural_invariants(monkeypatch):
    """Every sensitivity evaluated anywhere in the suite is checked."""
    monkeypatch.setattr(sens_mod, "sensitivity_at", _checked_sensitivity_at)
    yield


@pytest.fixture(scope="session")
def fixtures():
    names = ["wheatstone", "wheatstone_interior", "swap", "selfloop", "fig2"]
    return {n: load_game(fixture_path(n + ".json")) for n in names}


@pytest.fixture
def wheatstone(fixtures):
    return fixtures["wheatstone"][0]


@pytest.fixture
def interior(fixtures):
    return fixtures["wheatstone_interior"][0]


@pytest.fixture
def swap(fixtures):
    return fixtures["swap"][0]


@pytest.fixture
def selfloop(fixtures):
    return fixtures["selfloop"][0]


@pytest.fixture
def fig2(fixtures):
    return fixtures["fig2"][0]

