"""Numpy implementations of the hot loops.

Same signatures and semantics as the compiled ``_ckernels`` module; used
when the extension is unavailable or ``MDPCG_PURE_PYTHON`` is set.
"""
import numpy as np


def _q_values(cost, head_ptr, head_idx, head_prob, h):
    contrib = head_prob * h[head_idx]
    sums = np.add.reduceat(contrib, head_ptr[:-1]) if contrib.size else np.zeros(0)
    # reduceat misbehaves on empty segments; every hyperarc has >= 1 head
    return cost + sums


def relative_value_iteration(cost, sa_ptr, sa_idx, head_ptr, head_idx, head_prob,
                             h, tau, tol, max_sweeps):
    """Relative value iteration with the aperiodicity transform.

    Updates ``h`` in place (normalised so ``h[0] == 0``) and returns
    ``(gain, policy, sweeps, converged)`` where ``policy[s]`` is the index of
    the greedy hyperarc at state s.
    """
    starts = sa_ptr[:-1]
    lo = hi = 0.0
    converged = False
    sweeps = 0
    while sweeps < max_sweeps:
        sweeps += 1
        q = _q_values(cost, head_ptr, head_idx, head_prob, h)
        th = np.minimum.reduceat(q[sa_idx], starts)
        w = (1.0 - tau) * h + tau * th
        diff = w - h
        lo = diff.min()
        hi = diff.max()
        h[:] = w - w[0]
        if hi - lo < tol:
            converged = True
            break
    q = _q_values(cost, head_ptr, head_idx, head_prob, h)
    policy = np.empty(sa_ptr.size - 1, dtype=np.int64)
    for s in range(policy.size):
        seg = sa_idx[sa_ptr[s]:sa_ptr[s + 1]]
        policy[s] = seg[np.argmin(q[seg])]
    gain = 0.5 * (lo + hi) / tau
    return gain, policy, sweeps, converged


def stationary_power(P, x, tol, max_iter):
    """Stationary distribution of a row-stochastic ``P`` by lazy power iteration.

    ``x`` is the starting distribution (overwritten).  Returns
    ``(iterations, residual)`` with residual ``||x P - x||_1``.
    """
    res = np.inf
    it = 0
    while it < max_iter:
        y = x @ P
        res = np.abs(y - x).sum()
        if res <= tol:
            break
        x[:] = 0.5 * (x + y)
        x /= x.sum()
        it += 1
    return it, float(res)
