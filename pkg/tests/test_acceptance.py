"""Acceptance gate: one test and one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -v`` and read the lines starting
with ``[ACCEPTANCE]``.
"""
import contextlib
import csv
import io
import json
import time

import numpy as np
import pytest

import conftest
from games import interior_games, invertible_t_games
from mdpcg.cli import main
from mdpcg.cycle import build_transformation, derive_primal_graph, map_equilibrium, stochasticity_bound_check
from mdpcg.io import fixture_names, fixture_path, load_game
from mdpcg.oracle import mdp_linear_oracle
from mdpcg.sensitivity import finite_difference_check, sensitivity, social_cost_sensitivity
from mdpcg.solver import solve, solve_frank_wolfe, solve_interior_kkt
from mdpcg.errors import NotInterior
from oracles import brute_force_min, count_policies

GOLDEN_GRAD = np.array([0.023, 0.501, -0.478, 0.023, 0.454, 0.477])
FIG2_D = np.array([[0, -1, 0, 1], [1, 1, -1, 0], [-1, 0, 1, -1]], dtype=float)
FIG2_T = np.array([[0.4, 0, 0, 0], [0.6, 1, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1]])


@pytest.fixture
def criterion(capsys):
    """Yield a notes list; print one PASS/FAIL line when the block ends."""
    @contextlib.contextmanager
    def run(number, title):
        notes = []
        ok = False
        try:
            yield notes
            ok = True
        finally:
            with capsys.disabled():
                status = "PASS" if ok else "FAIL"
                detail = f" ({'; '.join(notes)})" if notes else ""
                print(f"\n[ACCEPTANCE] criterion {number} {status}: {title}{detail}")
    return run


def _cli(*argv):
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        code = main([str(a) for a in argv])
    return code, out.getvalue(), err.getvalue()


def _all_fixtures():
    return [(n, *load_game(fixture_path(n))) for n in fixture_names()]


def test_criterion_1_golden_sensitivity(criterion):
    with criterion(1, "golden social-cost gradient from `mdpcg sensitivity wheatstone.json`") as notes:
        t0 = time.perf_counter()
        code, out, _ = _cli("sensitivity", fixture_path("wheatstone.json"))
        elapsed = time.perf_counter() - t0
        notes.append(f"exit {code}, {elapsed:.3f}s")
        res = json.loads(out)
        assert code == 0, f"exit {code}: {res.get('message')}"
        grad = np.array(res["grad_J"])
        notes.append(f"max deviation {np.abs(grad - GOLDEN_GRAD).max():.2e}")
        assert np.all(np.abs(grad - GOLDEN_GRAD) <= 5e-3)
        assert elapsed < 1.0


def _sweep(arc):
    t0 = time.perf_counter()
    code, out, _ = _cli("sweep", fixture_path("wheatstone.json"), "--arc", arc,
                        "--max", 0.5, "--steps", 20)
    elapsed = time.perf_counter() - t0
    rows = list(csv.DictReader(io.StringIO(out)))
    J = np.array([float(r["social_cost"]) for r in rows])
    ok = np.array([r["assumption4_ok"] == "true" for r in rows])
    return code, J, ok, elapsed


def test_criterion_2_braess_sweeps(criterion):
    with criterion(2, "arc-3 sweep strictly decreasing while assumption4_ok, arc-2 sweep strictly increasing") as notes:
        code3, J3, ok3, t3 = _sweep(3)
        code2, J2, ok2, t2 = _sweep(2)
        pairs = [i for i in range(len(J3) - 1) if ok3[i] and ok3[i + 1]]
        dec = all(J3[i + 1] < J3[i] for i in pairs)
        inc = bool(np.all(np.diff(J2) > 0))
        notes.append(f"arc 3: {len(pairs)} valid pairs, J {J3[0]:.5f}->{J3[-1]:.5f}, {t3:.2f}s")
        notes.append(f"arc 2: increasing={inc}, J {J2[0]:.5f}->{J2[-1]:.5f}, {t2:.2f}s")
        assert code3 == 0 and code2 == 0
        assert inc and t2 < 5 and t3 < 5
        # a decrease over zero valid pairs would hold vacuously; require evidence
        assert pairs, "arc 3 never carries mass, so no point of the sweep is valid"
        assert dec


def test_criterion_3_certificates(criterion):
    with criterion(3, "certificates on all fixtures, interior KKT vs Frank-Wolfe") as notes:
        failures = []
        for name, spec, eps in _all_fixtures():
            eq = solve(spec, eps)
            scale = spec.mass * np.max(np.abs(spec.costs.value(eq.y, eps)))
            if eq.kkt_residual > 1e-6 or eq.wardrop_gap > 1e-6 * scale:
                failures.append(f"{name}: kkt {eq.kkt_residual:.1e} gap {eq.wardrop_gap:.1e}")
            fw = solve_frank_wolfe(spec, eps, tol=1e-10)
            try:
                kkt = solve_interior_kkt(spec, eps)
            except NotInterior:
                # boundary equilibrium: compare Frank-Wolfe with the certified solve
                notes.append(f"{name}: boundary equilibrium, interior KKT not applicable")
                ref = eq.y
            else:
                ref = kkt.y
            dev = np.abs(fw.y - ref).max()
            if dev > 1e-5:
                failures.append(f"{name}: FW deviation {dev:.1e}")
        assert not failures, failures


def test_criterion_4_finite_difference_oracle(criterion):
    with criterion(4, "finite_difference_check <= 1e-4 on wheatstone and 10 random games") as notes:
        t0 = time.perf_counter()
        errors = []
        spec, eps = load_game(fixture_path("wheatstone.json"))
        try:
            errors.append(("wheatstone", finite_difference_check(spec, solve(spec, eps), eps, h=1e-5)))
        except Exception as exc:
            errors.append(("wheatstone", f"{type(exc).__name__}: {exc}"))
        for i, (g, eq) in enumerate(interior_games(7, 10)):
            errors.append((f"random{i}", finite_difference_check(g, eq, h=1e-5)))
        elapsed = time.perf_counter() - t0
        bad = [(n, e) for n, e in errors if isinstance(e, str) or e > 1e-4]
        worst = max(e for _, e in errors if not isinstance(e, str))
        notes.append(f"random worst {worst:.1e}, {elapsed:.2f}s")
        if bad:
            notes.append(f"failing: {bad}")
        assert not bad and elapsed < 30


def test_criterion_5_structural_invariants(criterion):
    with criterion(5, "structural Jacobian identities on every sensitivity computation") as notes:
        before = conftest.CHECKED["count"]
        for _, spec, eps in _all_fixtures():
            eq = solve(spec, eps)
            if eq.is_interior(spec):
                sensitivity(spec, eq, eps)
        for g, eq in interior_games(7, 10) + invertible_t_games(11, 20):
            sensitivity(g, eq)
        done = conftest.CHECKED["count"] - before
        notes.append(f"{done} computations here, {conftest.CHECKED['count']} checked in this session")
        assert done > 0


def test_criterion_6_oracle_optimality(criterion):
    with criterion(6, "linear oracle matches policy enumeration on fixtures with <= 8 policies") as notes:
        rng = np.random.default_rng(0)
        checked = 0
        for name, spec, eps in _all_fixtures():
            if count_policies(spec) > 8:
                continue
            K = spec.num_arcs
            costs = [np.zeros(K), spec.costs.intercept, spec.costs.value(solve(spec, eps).y, eps)]
            costs += [rng.normal(size=K) for _ in range(20)]
            for c in costs:
                got = float(c @ mdp_linear_oracle(spec, c).y) / spec.mass
                assert abs(got - brute_force_min(spec, c)) <= 1e-9, name
                checked += 1
        notes.append(f"{checked} cost vectors")


def test_criterion_7_cycle_game(criterion):
    with criterion(7, "fig2 matrices, transformed KKT, stochasticity bound on fig2 and 20 random games") as notes:
        spec, eps = load_game(fixture_path("fig2.json"))
        primal = derive_primal_graph(spec)
        trans = build_transformation(spec, primal)
        assert np.array_equal(primal.D, FIG2_D)
        assert np.array_equal(trans.T, FIG2_T)
        eq = solve(spec, eps)
        cyc = map_equilibrium(spec, eq, primal, trans, eps)
        assert cyc.residual <= 1e-8
        bound = stochasticity_bound_check(spec, eq, eps)
        assert bound.holds
        notes.append(f"fig2 residual {cyc.residual:.1e}, lhs {bound.lhs:.4f} <= rhs {bound.rhs:.4f}")
        games = invertible_t_games(11, 20)
        held = sum(stochasticity_bound_check(g, e).holds for g, e in games)
        notes.append(f"{held}/20 random instances hold")
        assert held == 20


def test_criterion_8_sign_prediction(criterion):
    with criterion(8, "finite-difference slope sign matches the gradient sign") as notes:
        checked, skipped = 0, []
        for name, spec, eps in _all_fixtures():
            eq = solve(spec, eps)
            if not eq.is_interior(spec):
                skipped.append(name)
                continue
            grad = social_cost_sensitivity(spec, eq, eps)
            J0 = float(eq.y @ spec.costs.value(eq.y, eps))
            for k in np.flatnonzero(np.abs(grad) > 0.01):
                e = eps.copy()
                e[k] += 1e-3
                eq1 = solve(spec, e)
                slope = (float(eq1.y @ spec.costs.value(eq1.y, e)) - J0) / 1e-3
                assert np.sign(slope) == np.sign(grad[k]), (name, k, slope, grad[k])
                checked += 1
        notes.append(f"{checked} coordinates")
        if skipped:
            notes.append(f"no gradient at boundary equilibria: {skipped}")
