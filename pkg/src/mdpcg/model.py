"""MDP congestion games on directed hypergraphs.

A game is a set of hyperarcs (state-action pairs), each with one tail state
and a probability distribution over head states, plus a congestion cost per
hyperarc and a total population mass.  Vectors indexed by hyperarc always
follow the order in which the hyperarcs were given.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from mdpcg.errors import (
    KernelNotStochastic,
    NegativeMass,
    RankDeficient,
)

STOCHASTIC_TOL = 1e-12
NEGATIVE_MASS_TOL = 1e-12
RANK_RTOL = 1e-12


@dataclass(frozen=True)
class Hyperarc:
    """One state-action pair.

    ``state`` and the head states are 0-based.  ``heads`` keeps the order in
    which successor states were listed; it matters only for primal-graph edge
    ordering.
    """

    state: int
    action: str
    heads: tuple[tuple[int, float], ...]


class AffineCost:
    """Separable affine costs ``l(y, eps) = slope * y + intercept + eps``."""

    kind = "affine"

    def __init__(self, slope, intercept):
        self.slope = np.asarray(slope, dtype=float).copy()
        self.intercept = np.asarray(intercept, dtype=float).copy()
        if self.slope.shape != self.intercept.shape or self.slope.ndim != 1:
            raise ValueError("slope and intercept must be 1-d arrays of equal length")
        self.slope.flags.writeable = False
        self.intercept.flags.writeable = False

    def __len__(self):
        return self.slope.size

    def __eq__(self, other):
        return (
            isinstance(other, AffineCost)
            and np.array_equal(self.slope, other.slope)
            and np.array_equal(self.intercept, other.intercept)
        )

    def value(self, y, eps):
        return self.slope * y + self.intercept + eps

    def jac_y(self, y, eps):
        return np.diag(self.slope)

    def jac_y_diag(self, y, eps):
        return self.slope

    def jac_eps(self, y, eps):
        return np.eye(self.slope.size)

    def potential(self, y, eps):
        return 0.5 * float(self.slope @ (y * y)) + float((self.intercept + eps) @ y)


class GeneralCost:
    """Differentiable costs supplied as callables.

    Parameters
    ----------
    value : callable ``(y, eps) -> (K,)``
    jac_y : callable ``(y, eps) -> (K, K)``
    jac_eps : callable ``(y, eps) -> (K, K)``, optional
        Defaults to the identity (additive perturbation).
    size : int
        Number of hyperarcs K.
    """

    kind = "general"

    def __init__(
        self,
        value: Callable,
        jac_y: Callable,
        jac_eps: Callable | None = None,
        *,
        size: int,
    ):
        self._value = value
        self._jac_y = jac_y
        self._jac_eps = jac_eps
        self.size = size

    def __len__(self):
        return self.size

    def value(self, y, eps):
        return np.asarray(self._value(y, eps), dtype=float)

    def jac_y(self, y, eps):
        return np.asarray(self._jac_y(y, eps), dtype=float)

    def jac_y_diag(self, y, eps):
        return None

    def jac_eps(self, y, eps):
        if self._jac_eps is None:
            return np.eye(self.size)
        return np.asarray(self._jac_eps(y, eps), dtype=float)

    def potential(self, y, eps):
        # sum_k int_0^{y_k} l_k(u) du, via the substitution u = t * y_k
        total = 0.0
        for k in range(self.size):
            if y[k] == 0.0:
                continue
            val, _ = integrate.quad(
                lambda t, k=k: self.value(t * y, eps)[k] * y[k],
                0.0,
                1.0,
                epsabs=1e-10,
                epsrel=1e-12,
                limit=200,
            )
            total += val
        return total


def power_cost(coef, intercept, degree) -> GeneralCost:
    """Separable polynomial costs ``coef * y**degree + intercept + eps``."""
    coef = np.asarray(coef, dtype=float)
    intercept = np.asarray(intercept, dtype=float)

    def value(y, eps):
        return coef * np.power(y, degree) + intercept + eps

    def jac_y(y, eps):
        return np.diag(degree * coef * np.power(y, degree - 1))

    return GeneralCost(value, jac_y, size=coef.size)


@dataclass(frozen=True, eq=False)
class GameSpec:
    """An MDP congestion game.

    Parameters
    ----------
    num_states : int
    arcs : sequence of Hyperarc
        Defines the hyperarc ordering used by every vector and matrix.
    costs : AffineCost or GeneralCost
    mass : float
        Total population M > 0.
    """

    num_states: int
    arcs: tuple[Hyperarc, ...]
    costs: AffineCost | GeneralCost
    mass: float = 1.0
    _P: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        arcs = tuple(self.arcs)
        object.__setattr__(self, "arcs", arcs)
        S = self.num_states
        if S < 1:
            raise ValueError("num_states must be positive")
        if not self.mass > 0:
            raise ValueError("mass must be positive")
        if len(self.costs) != len(arcs):
            raise ValueError(f"cost model has {len(self.costs)} entries for {len(arcs)} hyperarcs")
        seen = set()
        P = np.zeros((S, len(arcs)))
        for k, arc in enumerate(arcs):
            if not 0 <= arc.state < S:
                raise ValueError(f"hyperarc {k}: tail state {arc.state} out of range")
            seen.add(arc.state)
            for head, prob in arc.heads:
                if not 0 <= head < S:
                    raise ValueError(f"hyperarc {k}: head state {head} out of range")
                if prob < 0:
                    raise KernelNotStochastic(f"hyperarc {k}: negative probability {prob}")
                P[head, k] += prob
        missing = sorted(set(range(S)) - seen)
        if missing:
            raise ValueError(f"states without actions: {missing}")
        _check_column_stochastic(P)
        P /= P.sum(axis=0, keepdims=True)
        P.flags.writeable = False
        object.__setattr__(self, "_P", P)

    @property
    def num_arcs(self) -> int:
        return len(self.arcs)

    @property
    def actions(self) -> list[list[str]]:
        out: list[list[str]] = [[] for _ in range(self.num_states)]
        for arc in self.arcs:
            out[arc.state].append(arc.action)
        return out

    @property
    def tails(self) -> np.ndarray:
        return np.array([arc.state for arc in self.arcs], dtype=np.int64)

    @property
    def kernel(self) -> dict[tuple[int, int, str], float]:
        """Sparse map ``(next_state, state, action) -> probability``."""
        out = {}
        for k, arc in enumerate(self.arcs):
            for s2 in np.flatnonzero(self._P[:, k]):
                out[(int(s2), arc.state, arc.action)] = float(self._P[s2, k])
        return out

    @property
    def transition(self) -> np.ndarray:
        """Dense S x K matrix with ``P[s', k]`` the probability of landing in s'."""
        return self._P

    def is_state_major(self) -> bool:
        t = self.tails
        return bool(np.all(np.diff(t) >= 0))

    def with_costs(self, costs) -> "GameSpec":
        return GameSpec(self.num_states, self.arcs, costs, self.mass)

    def with_mass(self, mass: float) -> "GameSpec":
        return GameSpec(self.num_states, self.arcs, self.costs, mass)

    def zero_eps(self) -> np.ndarray:
        return np.zeros(self.num_arcs)


def _check_column_stochastic(P):
    sums = P.sum(axis=0)
    bad = np.flatnonzero(np.abs(sums - 1.0) > STOCHASTIC_TOL)
    if bad.size:
        k = int(bad[0])
        raise KernelNotStochastic(
            f"hyperarc {k}: outgoing probabilities sum to {sums[k]!r}, not 1"
        )


def make_game(num_states, arcs, slope=None, intercept=None, mass=1.0, costs=None):
    """Convenience constructor.

    ``arcs`` is a sequence of ``(state, heads)`` or ``(state, action, heads)``
    where heads is either a single state or a ``{state: prob}`` mapping.
    States are 0-based.
    """
    built = []
    per_state: dict[int, int] = {}
    for item in arcs:
        if len(item) == 2:
            state, heads = item
            action = f"a{per_state.get(state, 0)}"
        else:
            state, action, heads = item
        per_state[state] = per_state.get(state, 0) + 1
        if isinstance(heads, dict):
            head_list = tuple((int(s), float(p)) for s, p in heads.items())
        else:
            head_list = ((int(heads), 1.0),)
        built.append(Hyperarc(int(state), str(action), head_list))
    if costs is None:
        costs = AffineCost(slope, intercept)
    return GameSpec(num_states, tuple(built), costs, mass)


@dataclass(frozen=True)
class IncidenceMatrix:
    full: np.ndarray
    reduced: np.ndarray
    removed_row: int


@dataclass(frozen=True)
class ValidationReport:
    strongly_connected: bool
    incidence_rank: int
    rank_ok: bool
    costs_monotone: bool
    kernel_stochastic: bool
    messages: list[str]

    @property
    def ok(self) -> bool:
        return (
            self.strongly_connected
            and self.rank_ok
            and self.costs_monotone
            and self.kernel_stochastic
        )

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "strongly_connected": self.strongly_connected,
            "incidence_rank": self.incidence_rank,
            "rank_ok": self.rank_ok,
            "costs_monotone": self.costs_monotone,
            "kernel_stochastic": self.kernel_stochastic,
            "messages": list(self.messages),
        }


def incidence(spec: GameSpec) -> np.ndarray:
    """Dense S x K incidence ``E = I_tail - P``: +1 at the tail, -P at heads.

    A self-transition contributes ``1 - P[s, s, a]`` so every column sums to 0.
    """
    E = -spec.transition.copy()
    E[spec.tails, np.arange(spec.num_arcs)] += 1.0
    return E


def numerical_rank(E: np.ndarray) -> int:
    if E.size == 0:
        return 0
    sv = np.linalg.svd(E, compute_uv=False)
    if sv.size == 0 or sv[0] == 0.0:
        return 0
    thresh = max(E.shape) * sv[0] * RANK_RTOL
    return int(np.sum(sv > thresh))


def build_incidence(spec: GameSpec) -> IncidenceMatrix:
    """Incidence matrix with its last row removed as the reduced form.

    Raises RankDeficient when the incidence does not have rank S - 1.
    """
    _check_column_stochastic(spec.transition)
    E = incidence(spec)
    return reduce_incidence(IncidenceMatrix(E, E[:-1].copy(), E.shape[0] - 1))


def reduce_incidence(inc: IncidenceMatrix) -> IncidenceMatrix:
    E = inc.full
    S = E.shape[0]
    rank = numerical_rank(E)
    if rank != S - 1:
        raise RankDeficient(f"incidence rank {rank}, expected {S - 1}")
    reduced = E[:-1].copy()
    full = E.copy()
    full.flags.writeable = False
    reduced.flags.writeable = False
    return IncidenceMatrix(full, reduced, S - 1)


def constraint_matrix(spec: GameSpec) -> np.ndarray:
    """K x S matrix ``N = [E_reduced^T, 1]`` stacking the equality constraints."""
    inc = build_incidence(spec)
    return np.hstack([inc.reduced.T, np.ones((spec.num_arcs, 1))])


def primal_adjacency(spec: GameSpec) -> np.ndarray:
    """Boolean S x S matrix, ``adj[s, s2]`` iff some action at s reaches s2."""
    S = spec.num_states
    adj = np.zeros((S, S), dtype=bool)
    P = spec.transition
    for k, s in enumerate(spec.tails):
        adj[s, P[:, k] > 0] = True
    return adj


def validate_assumptions(spec: GameSpec) -> ValidationReport:
    """Check connectivity, incidence rank and cost monotonicity. Never raises."""
    messages = []
    S = spec.num_states

    sums = spec.transition.sum(axis=0)
    kernel_ok = bool(np.all(np.abs(sums - 1.0) <= STOCHASTIC_TOL)) and bool(
        np.all(spec.transition >= 0)
    )
    if not kernel_ok:
        messages.append("transition kernel is not column stochastic")

    n_comp, _ = connected_components(
        csr_matrix(primal_adjacency(spec)), directed=True, connection="strong"
    )
    connected = n_comp == 1
    if not connected:
        messages.append(f"primal graph has {n_comp} strongly connected components")

    rank = numerical_rank(incidence(spec))
    rank_ok = rank == S - 1
    if not rank_ok:
        messages.append(f"incidence rank is {rank}, expected {S - 1}")

    monotone = costs_monotone(spec)
    if not monotone:
        messages.append("cost Jacobian is not positive definite")

    return ValidationReport(connected, rank, rank_ok, monotone, kernel_ok, messages)


def costs_monotone(spec: GameSpec, y=None, eps=None) -> bool:
    """Affine: all slopes > 0.  General: min eigenvalue of sym(jac_y) > 0 at y
    (uniform distribution of the mass when y is omitted)."""
    costs = spec.costs
    if costs.kind == "affine":
        return bool(np.all(costs.slope > 0))
    if y is None:
        y = np.full(spec.num_arcs, spec.mass / spec.num_arcs)
    if eps is None:
        eps = spec.zero_eps()
    return min_sym_eig(costs.jac_y(y, eps)) > 0


def min_sym_eig(G: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(0.5 * (G + G.T))[0])


def _check_mass(y):
    y = np.asarray(y, dtype=float)
    if np.any(y < -NEGATIVE_MASS_TOL):
        k = int(np.argmin(y))
        raise NegativeMass(f"negative mass {y[k]!r} on hyperarc {k}")
    return y


def _eps(spec, eps):
    return spec.zero_eps() if eps is None else np.asarray(eps, dtype=float)


def cost_eval(spec: GameSpec, y: Sequence[float], eps=None) -> np.ndarray:
    """Perturbed hyperarc costs ``l(y, eps)``."""
    y = _check_mass(y)
    return spec.costs.value(y, _eps(spec, eps))


def potential_eval(spec: GameSpec, y: Sequence[float], eps=None) -> float:
    """Potential ``sum_k int_0^{y_k} l_k(u, eps) du``."""
    y = _check_mass(y)
    return float(spec.costs.potential(y, _eps(spec, eps)))


def social_cost(spec: GameSpec, y, eps=None) -> float:
    y = np.asarray(y, dtype=float)
    return float(y @ spec.costs.value(y, _eps(spec, eps)))
