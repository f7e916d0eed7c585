import numpy as np
import pytest

from games import random_game
from mdpcg import kernels
from mdpcg.oracle import arc_layout

BACKENDS = kernels.backends()


def test_backend_selected():
    assert kernels.BACKEND in BACKENDS


def _rvi(mod, spec, c):
    lay = arc_layout(spec)
    h = np.zeros(spec.num_states)
    gain, policy, sweeps, ok = mod.relative_value_iteration(
        c, lay.sa_ptr, lay.sa_idx, lay.head_ptr, lay.head_idx, lay.head_prob,
        h, 0.5, 1e-10, 100_000)
    return gain, np.asarray(policy), h, ok


@pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled kernels not built")
@pytest.mark.parametrize("seed", range(15))
def test_rvi_backends_agree(seed):
    rng = np.random.default_rng(seed)
    spec = random_game(rng, int(rng.integers(2, 9)), max_actions=3, max_heads=3)
    c = rng.uniform(-1, 2, spec.num_arcs)
    g_py, pol_py, h_py, ok_py = _rvi(BACKENDS["python"], spec, c)
    g_c, pol_c, h_c, ok_c = _rvi(BACKENDS["cython"], spec, c)
    assert ok_py and ok_c
    assert g_py == pytest.approx(g_c, abs=1e-9)
    np.testing.assert_allclose(h_py, h_c, atol=1e-8)
    # ties may break differently only if costs tie, which random draws avoid
    np.testing.assert_array_equal(pol_py, pol_c)


@pytest.mark.parametrize("name", sorted(BACKENDS))
def test_stationary_power(name):
    mod = BACKENDS[name]
    rng = np.random.default_rng(1)
    P = rng.uniform(size=(6, 6))
    P /= P.sum(axis=1, keepdims=True)
    x = np.full(6, 1 / 6)
    _, res = mod.stationary_power(P, x, 1e-12, 1_000_000)
    assert res <= 1e-12
    np.testing.assert_allclose(x @ P, x, atol=1e-11)
    assert x.sum() == pytest.approx(1.0)


@pytest.mark.parametrize("name", sorted(BACKENDS))
def test_stationary_power_periodic_chain(name):
    # a pure two-cycle never mixes without the lazy step
    P = np.array([[0.0, 1.0], [1.0, 0.0]])
    x = np.array([0.9, 0.1])
    _, res = BACKENDS[name].stationary_power(P, x, 1e-12, 1_000_000)
    np.testing.assert_allclose(x, [0.5, 0.5], atol=1e-11)
