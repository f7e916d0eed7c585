"""Linear minimization over the stationary-flow polytope.

The vertices of ``{y : E y = 0, 1^T y = M, y >= 0}`` are mass-scaled
stationary state-action frequencies of deterministic policies restricted to
one recurrent class, so minimizing ``c^T y`` is an average-cost MDP with
stage costs ``c``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from mdpcg import kernels
from mdpcg.errors import OracleNoConverge
from mdpcg.model import GameSpec

RVI_TOL = 1e-10
RVI_MAX_SWEEPS = 100_000
RVI_TAU = 0.5
POWER_TOL = 1e-12
POWER_MAX_ITER = 1_000_000


@dataclass(frozen=True)
class ArcLayout:
    """CSR-style index arrays consumed by the kernels."""

    sa_ptr: np.ndarray  # (S+1,) offsets into sa_idx per state
    sa_idx: np.ndarray  # (K,) hyperarcs grouped by tail state
    head_ptr: np.ndarray  # (K+1,) offsets into head_idx/head_prob per hyperarc
    head_idx: np.ndarray
    head_prob: np.ndarray


def arc_layout(spec: GameSpec) -> ArcLayout:
    return _layout_cached(spec)


@lru_cache(maxsize=64)
def _layout_cached(spec):
    tails = spec.tails
    order = np.argsort(tails, kind="stable").astype(np.int64)
    counts = np.bincount(tails, minlength=spec.num_states)
    sa_ptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    P = spec.transition
    head_idx, head_prob, head_ptr = [], [], [0]
    for k in range(spec.num_arcs):
        nz = np.flatnonzero(P[:, k])
        head_idx.extend(nz.tolist())
        head_prob.extend(P[nz, k].tolist())
        head_ptr.append(len(head_idx))
    return ArcLayout(
        sa_ptr,
        order,
        np.asarray(head_ptr, dtype=np.int64),
        np.asarray(head_idx, dtype=np.int64),
        np.asarray(head_prob, dtype=float),
    )


@dataclass
class OracleResult:
    y: np.ndarray
    policy: np.ndarray  # chosen hyperarc per state
    support_states: np.ndarray  # recurrent class carrying the mass
    gain: float  # average cost of the returned vertex, c^T y / M
    values: np.ndarray  # relative values (warm start for the next call)
    sweeps: int


def policy_chain(spec: GameSpec, policy) -> np.ndarray:
    """Row-stochastic S x S transition matrix induced by a deterministic policy."""
    return spec.transition[:, np.asarray(policy)].T.copy()


def recurrent_classes(chain: np.ndarray) -> list[np.ndarray]:
    """Closed communicating classes of a row-stochastic matrix."""
    adj = chain > 0
    n, labels = connected_components(csr_matrix(adj), directed=True, connection="strong")
    classes = []
    for c in range(n):
        members = np.flatnonzero(labels == c)
        outside = np.ones(chain.shape[0], dtype=bool)
        outside[members] = False
        if not adj[np.ix_(members, outside)].any():
            classes.append(members)
    return classes


def stationary_distribution(chain: np.ndarray) -> np.ndarray:
    """Stationary distribution of an irreducible row-stochastic matrix."""
    n = chain.shape[0]
    x = np.full(n, 1.0 / n)
    P = np.ascontiguousarray(chain, dtype=float)
    _, res = kernels.stationary_power(P, x, POWER_TOL, POWER_MAX_ITER)
    if res > POWER_TOL:
        raise OracleNoConverge(f"power iteration residual {res:.3e} above {POWER_TOL}")
    return x


def class_flows(spec: GameSpec, policy, cost=None):
    """Per recurrent class of ``policy``: (members, y scaled by M, average cost)."""
    chain = policy_chain(spec, policy)
    out = []
    for members in recurrent_classes(chain):
        pi = stationary_distribution(chain[np.ix_(members, members)])
        y = np.zeros(spec.num_arcs)
        y[np.asarray(policy)[members]] = spec.mass * pi
        avg = float(cost @ y) / spec.mass if cost is not None else None
        out.append((members, y, avg))
    return out


def mdp_linear_oracle(spec: GameSpec, c, h0=None) -> OracleResult:
    """Return ``argmin c^T y`` over the feasible flows of ``spec``.

    Parameters
    ----------
    c : (K,) array
        Linear cost per hyperarc.
    h0 : (S,) array, optional
        Relative values from a previous call, used as warm start.
    """
    c = np.ascontiguousarray(c, dtype=float)
    lay = arc_layout(spec)
    h = np.zeros(spec.num_states) if h0 is None else np.array(h0, dtype=float)
    tol = RVI_TOL * max(1.0, float(np.max(np.abs(c))) if c.size else 1.0)
    _, policy, sweeps, converged = kernels.relative_value_iteration(
        c, lay.sa_ptr, lay.sa_idx, lay.head_ptr, lay.head_idx, lay.head_prob,
        h, RVI_TAU, tol, RVI_MAX_SWEEPS,
    )
    if not converged:
        raise OracleNoConverge(f"relative value iteration did not converge in {sweeps} sweeps")
    classes = class_flows(spec, policy, c)
    members, y, avg = min(classes, key=lambda item: item[2])
    return OracleResult(y, np.asarray(policy), members, avg, h, sweeps)
