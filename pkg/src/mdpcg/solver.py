"""Wardrop equilibrium computation and optimality certificates.

Two routes to the equilibrium of the potential problem

    min  sum_k int_0^{y_k} l_k(u, eps) du
    s.t. E y = 0,  1^T y = M,  y >= 0

* :func:`solve_interior_kkt` solves the KKT system with the nonnegativity
  multipliers set to zero (exact when the equilibrium is strictly positive);
* :func:`solve_frank_wolfe` runs conditional gradient with the average-cost
  MDP oracle as linear minimizer.

:func:`solve` tries the interior system first and otherwise runs a primal
active-set method whose faces are certified by the same oracle.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np
from scipy import optimize

from mdpcg.errors import (
    DegenerateOracle,
    MaxIterations,
    NegativeMultiplier,
    NotInterior,
    SingularSystem,
    SolverError,
)
from mdpcg.model import GameSpec, build_incidence, constraint_matrix, min_sym_eig
from mdpcg.oracle import mdp_linear_oracle

log = logging.getLogger(__name__)

INTERIOR_RTOL = 1e-9  # min y > INTERIOR_RTOL * M / K counts as strictly positive
SUPPORT_RTOL = 1e-7  # y_k > SUPPORT_RTOL * M / K counts as active for duals
NEWTON_TOL = 1e-13
NEWTON_MAX_ITER = 60
FACE_MAX_STEPS = 200
FACE_STEP_TOL = 1e-15
GAP_RTOL = 1e-12


@dataclass(frozen=True)
class Equilibrium:
    y: np.ndarray
    nu: np.ndarray
    lam: float
    mu: np.ndarray
    kkt_residual: float
    wardrop_gap: float
    solver: str
    iterations: int

    @property
    def min_y(self) -> float:
        return float(self.y.min())

    def is_interior(self, spec: GameSpec) -> bool:
        return self.min_y > INTERIOR_RTOL * spec.mass / spec.num_arcs


def _eps(spec, eps):
    return spec.zero_eps() if eps is None else np.asarray(eps, dtype=float)


def _saddle_matrix(G, N):
    S = N.shape[1]
    return np.block([[G, -N], [N.T, np.zeros((S, S))]])


def _kkt_rhs(spec, N):
    return np.concatenate([np.zeros(N.shape[1] - 1), [spec.mass]])


def stationary_point(spec: GameSpec, eps=None, y0=None):
    """Zero of the equality-constrained KKT map, ignoring ``y >= 0``.

    Returns ``(y, nu, lam, iterations)``.  For affine costs this is one
    linear solve of ``[diag(A), -N; N^T, 0] [y; nu; lam] = [-b - eps; 0; M]``;
    general costs use Newton's method from ``y0``.
    """
    eps = _eps(spec, eps)
    N = constraint_matrix(spec)
    K, S = N.shape
    costs = spec.costs
    if costs.kind == "affine":
        if np.any(costs.slope <= 0):
            raise SingularSystem("affine slopes must be strictly positive")
        KKT = _saddle_matrix(np.diag(costs.slope), N)
        rhs = np.concatenate([-(costs.intercept + eps), _kkt_rhs(spec, N)])
        sol = _solve_checked(KKT, rhs)
        return sol[:K], sol[K:K + S - 1], float(sol[-1]), 1
    if y0 is None:
        y0 = np.full(K, spec.mass / K)
    return _newton(spec, eps, N, np.array(y0, dtype=float))


def _solve_checked(KKT, rhs):
    try:
        cond = np.linalg.cond(KKT)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    if not np.isfinite(cond) or cond > 1e14:
        raise SingularSystem(f"KKT matrix condition number {cond:.3e}")
    return np.linalg.solve(KKT, rhs)


def _newton(spec, eps, N, y, active=None):
    """Newton iterations on the KKT map restricted to ``active`` hyperarcs."""
    K, S = N.shape
    if active is None:
        active = np.ones(K, dtype=bool)
    idx = np.flatnonzero(active)
    Na = N[idx]
    y = y.copy()
    y[~active] = 0.0
    ya = y[idx]
    # least-squares multipliers for the starting point
    l0 = spec.costs.value(y, eps)[idx]
    w, *_ = np.linalg.lstsq(Na, l0, rcond=None)
    rhs = _kkt_rhs(spec, N)

    def residual(ya, w):
        yy = np.zeros(K)
        yy[idx] = ya
        r1 = spec.costs.value(yy, eps)[idx] - Na @ w
        r2 = Na.T @ ya - rhs
        return np.concatenate([r1, r2]), yy

    r, yy = residual(ya, w)
    scale = max(1.0, float(np.max(np.abs(spec.costs.value(yy, eps)))))
    for it in range(1, NEWTON_MAX_ITER + 1):
        G = spec.costs.jac_y(yy, eps)[np.ix_(idx, idx)]
        step = _solve_checked(_saddle_matrix(G, Na), -r)
        t = 1.0
        norm0 = np.max(np.abs(r))
        while True:
            ya_new = ya + t * step[:idx.size]
            w_new = w + t * step[idx.size:]
            r_new, yy_new = residual(ya_new, w_new)
            if np.max(np.abs(r_new)) <= (1 - 1e-4 * t) * norm0 or t < 1e-8:
                break
            t *= 0.5
        ya, w, r, yy = ya_new, w_new, r_new, yy_new
        if np.max(np.abs(r)) <= NEWTON_TOL * scale:
            return yy, w[:-1], float(w[-1]), it
    raise SolverError(f"Newton iteration stalled at residual {np.max(np.abs(r)):.3e}")


def solve_interior_kkt(spec: GameSpec, eps=None, y0=None) -> Equilibrium:
    """Equilibrium under the assumption that every hyperarc carries mass.

    Raises NotInterior (carrying the stationary point) when the solution of
    the equality-constrained system has a nonpositive coordinate.
    """
    eps = _eps(spec, eps)
    if spec.costs.kind != "affine" and y0 is None:
        # a rough interior guess is enough: Newton is damped
        y0 = _frank_wolfe_iterate(spec, eps, tol=1e-3, max_iter=500)[0]
    y, nu, lam, iters = stationary_point(spec, eps, y0)
    thresh = INTERIOR_RTOL * spec.mass / spec.num_arcs
    if y.min() <= thresh:
        k = int(np.argmin(y))
        raise NotInterior(
            f"stationary point has y[{k}] = {y[k]:.6g}; equilibrium is on the boundary", y=y
        )
    mu = np.zeros(spec.num_arcs)
    return _certify(spec, eps, y, nu, lam, mu, "interior-kkt", iters)


def _certify(spec, eps, y, nu, lam, mu, solver, iterations):
    eq = Equilibrium(y, nu, lam, mu, np.nan, np.nan, solver, iterations)
    res = kkt_residual(spec, eq, eps)
    gap = wardrop_gap(spec, y, eps)
    return replace(eq, kkt_residual=res, wardrop_gap=gap)


def _frank_wolfe_iterate(spec, eps, tol, max_iter, y0=None, k0=0, record=False):
    """Plain Frank-Wolfe loop. Returns ``(y, gap, iterations, potential_trace)``.

    ``k0`` offsets the open-loop step schedule when resuming from ``y0``.
    The potential is only traced when ``record`` is set.
    """
    M = spec.mass
    costs = spec.costs
    E = build_incidence(spec).full
    h = None
    if y0 is None:
        start = mdp_linear_oracle(spec, costs.value(np.zeros(spec.num_arcs), eps))
        y, h = start.y, start.values
    else:
        y = np.array(y0, dtype=float)
    trace = [costs.potential(y, eps)] if record else []
    gap = np.inf
    k = 0
    for k in range(max_iter):
        g = costs.value(y, eps)
        vertex = mdp_linear_oracle(spec, g, h)
        h = vertex.values
        s = vertex.y
        if np.max(np.abs(E @ s)) > 1e-8 * M or abs(s.sum() - M) > 1e-8 * M:
            raise DegenerateOracle("oracle returned an infeasible vertex")
        d = s - y
        gap = float(-(g @ d))
        lam_est = float(g @ y) / M
        if gap <= tol * M * max(1.0, abs(lam_est)):
            break
        if costs.kind == "affine":
            curv = float(d @ (costs.slope * d))
            gamma = 1.0 if curv <= 0 else min(1.0, max(0.0, gap / curv))
        else:
            gamma = 2.0 / (k + k0 + 2.0)
        y = y + gamma * d
        if record:
            trace.append(costs.potential(y, eps))
    else:
        k = max_iter
    return y, gap, k, trace


def solve_frank_wolfe(spec: GameSpec, eps=None, tol: float = 1e-10, max_iter: int = 100_000,
                      y0=None, polish: bool = False) -> Equilibrium:
    """Frank-Wolfe on the potential with the MDP linear oracle.

    Stops when the Frank-Wolfe gap falls below ``tol * M * max(1, |lambda|)``.
    With ``polish=True`` the oracle-driven active-set method is used
    instead, which finishes in finitely many face solves.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    eps = _eps(spec, eps)
    if polish:
        return _face_active_set(spec, eps, tol, max_iter, y0)
    y, gap, iters, _ = _frank_wolfe_iterate(spec, eps, tol, max_iter, y0)
    lam_scale = max(1.0, abs(float(spec.costs.value(y, eps) @ y) / spec.mass))
    converged = gap <= tol * spec.mass * lam_scale
    nu, lam, mu = recover_duals(spec, y, eps, strict=False)
    eq = _certify(spec, eps, y, nu, lam, mu, "frank-wolfe", iters)
    if not converged:
        raise MaxIterations(
            f"Frank-Wolfe gap {gap:.3e} after {iters} iterations", equilibrium=eq, gap=gap
        )
    return eq


def solve(spec: GameSpec, eps=None, tol: float = 1e-8, method: str = "auto",
          max_iter: int = 100_000) -> Equilibrium:
    """Compute the equilibrium.

    ``method`` is ``"kkt"`` (interior KKT only), ``"fw"`` (oracle-driven
    active-set method) or ``"auto"`` (interior KKT, falling back to ``"fw"``).
    """
    eps = _eps(spec, eps)
    if method not in ("auto", "kkt", "fw"):
        raise ValueError(f"unknown method {method!r}")
    if method in ("auto", "kkt"):
        try:
            return solve_interior_kkt(spec, eps)
        except NotInterior:
            if method == "kkt":
                raise
            log.info("interior KKT solution infeasible; falling back to Frank-Wolfe")
    return _face_active_set(spec, eps, tol, max_iter)


def _face_step(spec, eps, N, y, free):
    """Newton step toward the potential minimizer on the face ``y[~free] = 0``.

    Solves ``min 1/2 p^T G p + g^T p`` s.t. ``N^T p = 0`` over the free
    coordinates.  ``N`` restricted to the face may lose rank; the step is
    still unique because ``G`` is positive definite.
    """
    idx = np.flatnonzero(free)
    g = spec.costs.value(y, eps)[idx]
    Nf = N[idx]
    diag = spec.costs.jac_y_diag(y, eps)
    if diag is not None:
        Gi = 1.0 / diag[idx]
        w = np.linalg.lstsq(Nf.T @ (Gi[:, None] * Nf), Nf.T @ (Gi * g), rcond=None)[0]
        p = Gi * (Nf @ w - g)
    else:
        G = spec.costs.jac_y(y, eps)[np.ix_(idx, idx)]
        rhs = np.concatenate([-g, np.zeros(N.shape[1])])
        p = np.linalg.lstsq(_saddle_matrix(G, Nf), rhs, rcond=None)[0][:idx.size]
    step = np.zeros(spec.num_arcs)
    step[idx] = p
    return step


def _line_search(spec, eps, y, d, t_max=1.0):
    """Minimize the potential along ``y + t d`` for ``t`` in ``[0, t_max]``."""
    costs = spec.costs
    if costs.kind == "affine":
        slope0 = float(costs.value(y, eps) @ d)
        curv = float(d @ (costs.slope * d))
        if curv <= 0:
            return t_max
        return min(t_max, max(0.0, -slope0 / curv))
    dphi = lambda t: float(costs.value(y + t * d, eps) @ d)  # noqa: E731
    if dphi(0.0) >= 0:
        return 0.0
    if dphi(t_max) <= 0:
        return t_max
    return optimize.brentq(dphi, 0.0, t_max, xtol=1e-15, rtol=4 * np.finfo(float).eps)


def _face_active_set(spec, eps, tol, max_iter, y0=None):
    """Primal active-set method certified by the MDP oracle.

    Each round minimizes the potential over the current face (arcs that
    reach zero are fixed there), then asks the oracle for the best vertex.
    A positive Frank-Wolfe gap means the face is wrong: an exact line
    search towards that vertex frees the improving arcs and strictly lowers
    the potential, so no face is visited twice.
    """
    M, K = spec.mass, spec.num_arcs
    N = constraint_matrix(spec)
    affine = spec.costs.kind == "affine"
    if y0 is None:
        y = mdp_linear_oracle(spec, spec.costs.value(np.zeros(K), eps)).y
    else:
        y = np.array(y0, dtype=float)
    free = y > 0
    h = None
    gap = np.inf
    steps = 0
    for _ in range(max_iter):
        for _ in range(FACE_MAX_STEPS):
            p = _face_step(spec, eps, N, y, free)
            steps += 1
            if np.max(np.abs(p)) <= FACE_STEP_TOL * M:
                break
            neg = free & (p < 0)
            ratios = y[neg] / -p[neg]
            alpha = min(1.0, float(ratios.min())) if ratios.size else 1.0
            t = alpha if affine else _line_search(spec, eps, y, p, alpha)
            if t == 0.0:
                break
            y = y + t * p
            if t == alpha and alpha < 1.0:
                k = np.flatnonzero(neg)[np.argmin(ratios)]
                y[k] = 0.0
                free[k] = False
            elif affine:
                break  # exact minimizer of the face
        y = np.maximum(y, 0.0)
        g = spec.costs.value(y, eps)
        vertex = mdp_linear_oracle(spec, g, h)
        h = vertex.values
        d = vertex.y - y
        gap = float(-(g @ d))
        if gap <= GAP_RTOL * M * max(1.0, float(np.max(np.abs(g)))):
            break
        y = y + _line_search(spec, eps, y, d) * d
        free = y > 0
    nu, lam, mu = recover_duals(spec, y, eps, strict=False)
    eq = _certify(spec, eps, y, nu, lam, mu, "active-set", steps)
    if gap > tol * M * max(1.0, abs(lam)):
        raise MaxIterations(f"active-set gap {gap:.3e} after {steps} steps", equilibrium=eq, gap=gap)
    return eq


def recover_duals(spec: GameSpec, y, eps=None, strict: bool = True):
    """Multipliers ``(nu, lam, mu)`` for a feasible flow ``y``.

    ``lam = y^T l / M``; ``nu`` starts from the MDP relative values at
    costs ``l(y)`` and is corrected by least squares so that
    ``E_reduced^T nu = l - lam`` on the support of y; ``mu`` is the remaining
    slack, clipped at -1e-8.  With ``strict`` a multiplier below
    ``-1e-6 * max|l|`` raises NegativeMultiplier.
    """
    eps = _eps(spec, eps)
    y = np.asarray(y, dtype=float)
    K = spec.num_arcs
    l = spec.costs.value(y, eps)
    lam = float(y @ l) / spec.mass
    Et = build_incidence(spec).reduced
    support = y > SUPPORT_RTOL * spec.mass / K
    if Et.shape[0]:
        # relative values of the average-cost MDP priced at l(y) are valid
        # potentials; the support equations then fix them up to rounding
        h = mdp_linear_oracle(spec, l).values
        nu0 = (h - h[-1])[:-1]
        A = Et.T[support]
        corr, *_ = np.linalg.lstsq(A, (l - lam)[support] - A @ nu0, rcond=None)
        nu = nu0 + corr
    else:
        nu = np.zeros(0)
    mu = l - Et.T @ nu - lam
    scale = float(np.max(np.abs(l))) if l.size else 1.0
    if strict and mu.min() < -1e-6 * scale:
        k = int(np.argmin(mu))
        raise NegativeMultiplier(f"mu[{k}] = {mu[k]:.3e}: y is not an equilibrium")
    if mu.min() < -1e-8:
        log.debug("clipping %d negative multipliers", int(np.sum(mu < -1e-8)))
    return nu, lam, np.maximum(mu, -1e-8)


def kkt_report(spec: GameSpec, eq: Equilibrium, eps=None) -> dict:
    eps = _eps(spec, eps)
    Et = build_incidence(spec).reduced
    y, mu = eq.y, eq.mu
    l = spec.costs.value(y, eps)
    parts = [
        l - Et.T @ eq.nu - eq.lam - mu,
        Et @ y,
        [y.sum() - spec.mass],
        [mu @ y],
    ]
    res = float(max(np.max(np.abs(p)) if len(p) else 0.0 for p in parts))
    return {"residual": res, "min_y": float(y.min()), "min_mu": float(mu.min())}


def kkt_residual(spec: GameSpec, eq: Equilibrium, eps=None) -> float:
    """Infinity norm of the stationarity / feasibility / complementarity stack."""
    return kkt_report(spec, eq, eps)["residual"]


def wardrop_gap(spec: GameSpec, y, eps=None) -> float:
    """Population variational-inequality gap ``l(y)^T y - min_{y'} l(y)^T y'``."""
    eps = _eps(spec, eps)
    y = np.asarray(y, dtype=float)
    g = spec.costs.value(y, eps)
    best = mdp_linear_oracle(spec, g)
    return float(g @ y - g @ best.y)


def cost_jacobian_ok(spec: GameSpec, y, eps=None) -> bool:
    eps = _eps(spec, eps)
    return min_sym_eig(spec.costs.jac_y(y, eps)) > 0
