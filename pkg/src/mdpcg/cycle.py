"""Deterministic counterpart of an MDP congestion game.

Every hyperarc spreads its mass over primal-graph edges leaving its tail, so
the hypergraph incidence factors as ``E = D T`` with ``D`` the signed edge
incidence and ``T`` a nonnegative column-stochastic matrix.  When ``T`` is
square and invertible the MDP equilibrium maps to the equilibrium of the
cycle game on the primal graph with costs ``T^-T l(T^-1 z)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from mdpcg.errors import CostNotMonotone, NotInvertible, NotStrictlyPositive, SelfLoopUnsupported
from mdpcg.model import GameSpec, incidence, min_sym_eig
from mdpcg.sensitivity import closed_form, sensitivity
from mdpcg.solver import INTERIOR_RTOL, Equilibrium

COND_MAX = 1e12


@dataclass(frozen=True)
class PrimalGraph:
    edges: list[tuple[int, int]]
    D: np.ndarray

    @property
    def num_edges(self) -> int:
        return len(self.edges)


@dataclass(frozen=True)
class TransformationT:
    T: np.ndarray
    invertible: bool
    sigma_max: float
    cond: float

    @property
    def inverse(self) -> np.ndarray:
        if not self.invertible:
            raise NotInvertible(
                f"T is {self.T.shape[0]}x{self.T.shape[1]} with condition number {self.cond:.3e}",
                num_edges=self.T.shape[0], num_arcs=self.T.shape[1],
            )
        return np.linalg.inv(self.T)


def derive_primal_graph(spec: GameSpec, order: str = "appearance") -> PrimalGraph:
    """Edges ``(s1, s2)`` such that some action at s1 reaches s2.

    ``order="appearance"`` lists edges as first met scanning hyperarcs in
    order and their heads as listed; ``order="lexicographic"`` sorts by
    (tail, head).
    """
    S = spec.num_states
    edges: list[tuple[int, int]] = []
    seen = set()
    for k, arc in enumerate(spec.arcs):
        for head, prob in arc.heads:
            if prob <= 0:
                continue
            if head == arc.state and S > 1:
                raise SelfLoopUnsupported(
                    f"hyperarc {k + 1} returns to its tail state {arc.state + 1}"
                )
            e = (arc.state, head)
            if e not in seen:
                seen.add(e)
                edges.append(e)
    if order == "lexicographic":
        edges.sort()
    elif order != "appearance":
        raise ValueError(f"unknown edge order {order!r}")
    D = np.zeros((S, len(edges)))
    for j, (tail, head) in enumerate(edges):
        D[tail, j] += 1.0
        D[head, j] -= 1.0
    return PrimalGraph(edges, D)


def build_transformation(spec: GameSpec, primal: PrimalGraph) -> TransformationT:
    """``T[(s1, s2), (s, a)] = P(s2 | s, a)`` if s1 == s, else 0."""
    index = {e: j for j, e in enumerate(primal.edges)}
    P = spec.transition
    T = np.zeros((primal.num_edges, spec.num_arcs))
    for k, s in enumerate(spec.tails):
        for s2 in np.flatnonzero(P[:, k]):
            T[index[(int(s), int(s2))], k] = P[s2, k]
    err = np.max(np.abs(primal.D @ T - incidence(spec))) if T.size else 0.0
    if err > 1e-12:
        raise AssertionError(f"E != D T (max deviation {err:.3e})")
    sigma = float(np.linalg.norm(T, 2)) if T.size else 0.0
    if T.shape[0] == T.shape[1]:
        cond = float(np.linalg.cond(T))
        invertible = bool(np.isfinite(cond) and cond < COND_MAX)
    else:
        cond, invertible = float("inf"), False
    return TransformationT(T, invertible, sigma, cond)


@dataclass(frozen=True)
class CycleEquilibrium:
    z: np.ndarray
    nu: np.ndarray
    lam: float
    residual: float
    D: np.ndarray
    T: np.ndarray
    T_inv: np.ndarray
    spec: GameSpec
    eps: np.ndarray

    def edge_costs(self, z, eps=None) -> np.ndarray:
        """Transformed costs ``T^-T l(T^-1 z, eps)``."""
        eps = self.eps if eps is None else eps
        return self.T_inv.T @ self.spec.costs.value(self.T_inv @ z, eps)

    def edge_cost_jacobian(self, z, eps=None) -> np.ndarray:
        eps = self.eps if eps is None else eps
        G = self.spec.costs.jac_y(self.T_inv @ z, eps)
        return self.T_inv.T @ G @ self.T_inv


def _check(spec, eq, trans):
    if not trans.invertible:
        raise NotInvertible(
            f"T is {trans.T.shape[0]}x{trans.T.shape[1]}, not invertible "
            f"(|E_d| = {trans.T.shape[0]}, K = {trans.T.shape[1]})",
            num_edges=trans.T.shape[0], num_arcs=trans.T.shape[1],
        )
    if eq.y.min() <= INTERIOR_RTOL * spec.mass / spec.num_arcs:
        raise NotStrictlyPositive("equilibrium is not strictly positive", y=eq.y)


def map_equilibrium(spec: GameSpec, eq: Equilibrium, primal: PrimalGraph,
                    trans: TransformationT, eps=None) -> CycleEquilibrium:
    """Push ``y*`` to edge flows ``z* = T y*`` and verify the cycle-game KKT."""
    eps = spec.zero_eps() if eps is None else np.asarray(eps, dtype=float)
    _check(spec, eq, trans)
    Ti = trans.inverse
    z = trans.T @ eq.y
    D = primal.D
    stationarity = Ti.T @ spec.costs.value(Ti @ z, eps) - D[:-1].T @ eq.nu - eq.lam
    parts = [stationarity, D @ z, [np.sum(Ti @ z) - spec.mass]]
    residual = float(max(np.max(np.abs(p)) for p in parts))
    return CycleEquilibrium(z, eq.nu, eq.lam, residual, D, trans.T, Ti, spec, eps)


def cycle_social_cost_sensitivity(cyc: CycleEquilibrium) -> np.ndarray:
    """Social-cost gradient of the cycle game w.r.t. additive edge-cost perturbations."""
    z = cyc.z
    Gc = cyc.edge_cost_jacobian(z)
    if min_sym_eig(Gc) <= 0:
        raise CostNotMonotone("transformed cost Jacobian is not positive definite")
    n = z.size
    Nc = np.hstack([cyc.D[:-1].T, np.ones((n, 1))])
    dz, dl, _ = closed_form(Gc, Nc, np.eye(n))
    return dz.T @ cyc.edge_costs(z) + dl.T @ z


@dataclass(frozen=True)
class BoundCheck:
    lhs: float
    rhs: float
    holds: bool
    sigma_max: float
    grad_cycle: np.ndarray
    grad_mdp: np.ndarray

    def __iter__(self):
        return iter((self.lhs, self.rhs, self.holds))


def stochasticity_bound_check(spec: GameSpec, eq: Equilibrium, eps=None,
                              order: str = "appearance") -> BoundCheck:
    """Compare ``||grad J_cycle||_2`` against ``||T||_2 ||grad J||_2``."""
    primal = derive_primal_graph(spec, order)
    trans = build_transformation(spec, primal)
    cyc = map_equilibrium(spec, eq, primal, trans, eps)
    g_cycle = cycle_social_cost_sensitivity(cyc)
    g_mdp = sensitivity(spec, eq, eps).dJ_deps
    lhs = float(np.linalg.norm(g_cycle))
    rhs = trans.sigma_max * float(np.linalg.norm(g_mdp))
    return BoundCheck(lhs, rhs, lhs <= rhs * (1 + 1e-9), trans.sigma_max, g_cycle, g_mdp)
