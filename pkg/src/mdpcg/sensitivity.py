"""First-order sensitivity of a strictly positive equilibrium.

With ``G = d l / d y``, ``J = d l / d eps`` and ``N = [E_reduced^T, 1]``
evaluated at the equilibrium, differentiating the KKT system gives

    d[nu; lam]/d eps = (N^T G^-1 N)^-1 N^T G^-1 J
    d l*/d eps       = N d[nu; lam]/d eps
    d y*/d eps       = G^-1 (d l*/d eps - J)

and the social cost ``y^T l(y)`` moves at ``(dy)^T l + (dl)^T y``.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from mdpcg.errors import IllConditioned, NotStrictlyPositive, CostNotMonotone
from mdpcg.model import GameSpec, constraint_matrix, min_sym_eig
from mdpcg.solver import (
    INTERIOR_RTOL,
    Equilibrium,
    solve,
    stationary_point,
)

SCHUR_COND_MAX = 1e12
BRAESS_RTOL = 1e-9
ZERO_JACOBIAN = 1e-12


@dataclass(frozen=True)
class SensitivityResult:
    dy_deps: np.ndarray
    dl_deps: np.ndarray
    ddual_deps: np.ndarray
    dJ_deps: np.ndarray
    G: np.ndarray
    J_mat: np.ndarray
    N: np.ndarray

    def residuals(self) -> dict:
        """Structural identities, each as (residual, scale)."""
        dy, dl, N = self.dy_deps, self.dl_deps, self.N
        scale_y = max(float(np.max(np.abs(dy))), 1.0) if dy.size else 1.0
        scale_l = max(float(np.max(np.abs(dl))), float(np.max(np.abs(self.J_mat))), 1.0)
        coef, *_ = np.linalg.lstsq(N, dl, rcond=None)
        return {
            "feasibility": (_inf(N.T @ dy), scale_y),
            "range": (float(np.linalg.norm(N @ coef - dl)), max(float(np.linalg.norm(dl)), 1.0)),
            "stationarity": (_inf(self.G @ dy + self.J_mat - dl), scale_l),
            "dual_consistency": (_inf(N @ self.ddual_deps - dl), scale_l),
        }


def _inf(a):
    return float(np.max(np.abs(a))) if a.size else 0.0


def closed_form(G, N, J):
    """Return ``(dy, dl, ddual)`` for the given Jacobians.

    ``G`` may be passed as a 1-d array of diagonal entries.
    """
    if G.ndim == 1:
        solve_G = lambda X: X / G[:, None]  # noqa: E731
    else:
        lu = linalg.lu_factor(G)
        solve_G = lambda X: linalg.lu_solve(lu, X)  # noqa: E731
    GiN = solve_G(N)
    schur = N.T @ GiN
    if schur.size:
        cond = np.linalg.cond(schur)
        if not np.isfinite(cond) or cond > SCHUR_COND_MAX:
            raise IllConditioned(f"N^T G^-1 N has condition number {cond:.3e}")
    GiJ = solve_G(J)
    ddual = np.linalg.solve(schur, N.T @ GiJ)
    dl = N @ ddual
    dy = solve_G(dl - J)
    return dy, dl, ddual


def jacobians(spec: GameSpec, y, eps):
    """``(G, J, N)`` at ``(y, eps)``; G as its diagonal for affine costs."""
    costs = spec.costs
    diag = costs.jac_y_diag(y, eps)
    G = diag if diag is not None else costs.jac_y(y, eps)
    return G, costs.jac_eps(y, eps), constraint_matrix(spec)


def _eps(spec, eps):
    return spec.zero_eps() if eps is None else np.asarray(eps, dtype=float)


def sensitivity(spec: GameSpec, eq: Equilibrium, eps=None) -> SensitivityResult:
    """All Jacobians at a strictly positive equilibrium."""
    eps = _eps(spec, eps)
    thresh = INTERIOR_RTOL * spec.mass / spec.num_arcs
    if eq.y.min() <= thresh:
        zero = np.flatnonzero(eq.y <= thresh)
        raise NotStrictlyPositive(
            f"equilibrium has no mass on hyperarcs {(zero + 1).tolist()}; "
            "sensitivity is only defined for strictly positive equilibria",
            y=eq.y,
        )
    return sensitivity_at(spec, eq.y, eps)


def sensitivity_at(spec: GameSpec, y, eps=None) -> SensitivityResult:
    """Evaluate the closed-form Jacobians at an arbitrary point ``y``.

    No positivity check: use :func:`sensitivity` for equilibria.
    """
    eps = _eps(spec, eps)
    y = np.asarray(y, dtype=float)
    G, J, N = jacobians(spec, y, eps)
    Gfull = np.diag(G) if G.ndim == 1 else G
    if min_sym_eig(Gfull) <= 0:
        raise CostNotMonotone("cost Jacobian is not positive definite at the equilibrium")
    dy, dl, ddual = closed_form(G, N, J)
    l = spec.costs.value(y, eps)
    dJ = dy.T @ l + dl.T @ y
    return SensitivityResult(dy, dl, ddual, dJ, Gfull, J, N)


def flow_sensitivity(spec, eq, eps=None) -> np.ndarray:
    return sensitivity(spec, eq, eps).dy_deps


def cost_sensitivity(spec, eq, eps=None) -> np.ndarray:
    return sensitivity(spec, eq, eps).dl_deps


def dual_sensitivity(spec, eq, eps=None) -> np.ndarray:
    """Rows are the derivatives of nu (S-1 rows) followed by lambda."""
    return sensitivity(spec, eq, eps).ddual_deps


def social_cost_sensitivity(spec, eq, eps=None) -> np.ndarray:
    return sensitivity(spec, eq, eps).dJ_deps


@dataclass(frozen=True)
class BraessReport:
    paradox_possible: bool
    worst_direction: np.ndarray
    predicted_rate: float

    def to_dict(self):
        return {
            "possible": self.paradox_possible,
            "worst_direction": self.worst_direction.tolist(),
            "rate": self.predicted_rate,
        }


def braess_from_gradient(grad) -> BraessReport:
    grad = np.asarray(grad, dtype=float)
    scale = float(np.max(np.abs(grad))) if grad.size else 0.0
    possible = bool(grad.size) and grad.min() < -BRAESS_RTOL * scale
    if possible:
        neg = np.maximum(-grad, 0.0)
        direction = neg / np.linalg.norm(neg)
    else:
        # no cost increase lowers J; the cheapest nonnegative unit direction
        direction = np.zeros_like(grad)
        if grad.size:
            direction[int(np.argmin(grad))] = 1.0
    return BraessReport(possible, direction, float(direction @ grad))


def detect_braess(spec, eq, eps=None) -> BraessReport:
    """Flag a stochastic Braess paradox from the social-cost gradient.

    A negative gradient component means some nonnegative cost increase
    lowers the equilibrium social cost to first order.
    """
    return braess_from_gradient(social_cost_sensitivity(spec, eq, eps))


@dataclass
class SweepRow:
    eps: float
    social_cost: float
    pred_dJ: float
    lam: float
    assumption4_ok: bool
    y: np.ndarray


@dataclass
class SweepTable:
    direction: np.ndarray
    rows: list[SweepRow] = field(default_factory=list)

    @property
    def social_cost(self) -> np.ndarray:
        return np.array([r.social_cost for r in self.rows])

    @property
    def eps(self) -> np.ndarray:
        return np.array([r.eps for r in self.rows])

    @property
    def valid(self) -> np.ndarray:
        return np.array([r.assumption4_ok for r in self.rows])

    def header(self) -> list[str]:
        K = self.direction.size
        return ["eps", "social_cost", "pred_dJ", "lambda", "assumption4_ok"] + [
            f"y_{k + 1}" for k in range(K)
        ]


def max_workers() -> int:
    env = os.environ.get("MDPCG_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def sweep_point(spec: GameSpec, direction, t: float, base_eps=None) -> SweepRow:
    base = _eps(spec, base_eps)
    eps = base + t * direction
    eq = solve(spec, eps)
    J = float(eq.y @ spec.costs.value(eq.y, eps))
    ok = eq.is_interior(spec)
    pred = float(sensitivity(spec, eq, eps).dJ_deps @ direction) if ok else float("nan")
    return SweepRow(t, J, pred, eq.lam, ok, eq.y)


def sweep_grid(eps_max: float, steps: int) -> np.ndarray:
    if eps_max == 0:
        return np.zeros(1)
    return np.arange(steps + 1) * (eps_max / steps)


def perturbation_sweep(spec: GameSpec, direction, eps_max: float, steps: int,
                       base_eps=None, workers: int | None = None) -> SweepTable:
    """Re-solve the game at ``eps = t * direction`` for ``t = i * eps_max / steps``.

    Points where some hyperarc loses all its mass are kept but flagged with
    ``assumption4_ok = False`` and a NaN predicted slope.
    """
    direction = np.asarray(direction, dtype=float)
    if direction.shape != (spec.num_arcs,):
        raise ValueError("direction must have one entry per hyperarc")
    if np.any(direction < 0):
        raise ValueError("direction must be nonnegative")
    if steps < 2 and eps_max != 0:
        raise ValueError("steps must be at least 2")
    ts = sweep_grid(eps_max, steps)
    table = SweepTable(direction)
    for row in iter_sweep(spec, direction, ts, base_eps, workers):
        table.rows.append(row)
    return table


def iter_sweep(spec, direction, ts, base_eps=None, workers=None):
    """Yield sweep rows in order; points are solved concurrently."""
    workers = workers or max_workers()
    if workers == 1 or len(ts) == 1:
        for t in ts:
            yield sweep_point(spec, direction, float(t), base_eps)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(sweep_point, spec, direction, float(t), base_eps) for t in ts]
        for fut in futures:
            yield fut.result()


def _resolve(spec, eps, y0):
    if spec.costs.kind == "affine":
        y, nu, lam, _ = stationary_point(spec, eps)
    else:
        y, nu, lam, _ = stationary_point(spec, eps, y0)
    if y.min() <= INTERIOR_RTOL * spec.mass / spec.num_arcs:
        raise NotStrictlyPositive("perturbed equilibrium left the interior", y=y)
    return y, nu, lam


def finite_difference_jacobians(spec: GameSpec, eq: Equilibrium, eps=None, h: float = 1e-5):
    """Central-difference versions of ``(dy, dl, ddual, dJ)``."""
    eps = _eps(spec, eps)
    K = spec.num_arcs
    S = spec.num_states
    dy = np.empty((K, K))
    dl = np.empty((K, K))
    dd = np.empty((S, K))
    dJ = np.empty(K)
    for k in range(K):
        e = np.zeros(K)
        e[k] = h
        out = []
        for sign in (1.0, -1.0):
            ek = eps + sign * e
            y, nu, lam = _resolve(spec, ek, eq.y)
            l = spec.costs.value(y, ek)
            out.append((y, l, np.concatenate([nu, [lam]]), float(y @ l)))
        (yp, lp, dp, Jp), (ym, lm, dm, Jm) = out
        dy[:, k] = (yp - ym) / (2 * h)
        dl[:, k] = (lp - lm) / (2 * h)
        dd[:, k] = (dp - dm) / (2 * h)
        dJ[k] = (Jp - Jm) / (2 * h)
    return dy, dl, dd, dJ


def finite_difference_check(spec: GameSpec, eq: Equilibrium, eps=None, h: float = 1e-5) -> float:
    """Largest relative Frobenius discrepancy between closed-form and
    central-difference Jacobians (flow, cost, duals, social cost).

    A closed-form Jacobian that vanishes identically is compared in
    absolute terms instead.
    """
    if not 1e-7 <= h <= 1e-3:
        raise ValueError("h must lie in [1e-7, 1e-3]")
    res = sensitivity(spec, eq, eps)
    fd = finite_difference_jacobians(spec, eq, eps, h)
    worst = 0.0
    for exact, approx in zip((res.dy_deps, res.dl_deps, res.ddual_deps, res.dJ_deps), fd):
        norm = float(np.linalg.norm(exact))
        # relative error is meaningless for an identically zero Jacobian
        denom = max(norm, 1e-6) if norm > ZERO_JACOBIAN else 1.0
        worst = max(worst, float(np.linalg.norm(exact - approx)) / denom)
    return worst
