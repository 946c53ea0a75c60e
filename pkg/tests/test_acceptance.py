"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Tolerances and sample counts are the stated ones.  A criterion that fails is
left failing; the terminal summary lists all verdicts together.
"""
import math
import time

import numpy as np
import pytest

from minsys.calculus import divergence_residual, volume
from minsys.diagnostics import (
    area_decreasing_audit,
    identity_check,
    min_principle_check,
    refinement_order,
    superharmonicity_check,
)
from minsys.grid import BoundaryData, GridDomain, VectorField, jets, sample_preset
from minsys.pointwise import grassmann_forms_batch, identity_rhs, op_norm, svd_batch, wedge2_norm
from minsys.solvers import SolveConfig, harmonic_extension, newton_solve, solve

from support import HOLO, SCHERK, domain, interior_bump, solved

LEVELS = (17, 33, 65)

# Dirichlet problems whose solutions are audited by criteria 6 and 10
SUITE = [
    ("zero", {"m": 2}, 2, 33),
    ("linear", {"A": [[0.5, 0.2], [0.1, -0.3]]}, 2, 33),
    ("scherk", {}, 2, 33),
    ("holomorphic_quadratic", {"c": 0.3}, 2, 33),
    ("holomorphic_quadratic", {"c": 0.6}, 2, 33),
    ("trig", {"m": 2, "amp": 0.5}, 2, 33),
    ("trig", {"m": 1, "amp": 0.8}, 2, 33),
    ("random_lipschitz", {"seed": 1, "m": 2, "lip": 0.5}, 2, 33),
    ("random_lipschitz", {"seed": 3, "m": 3, "lip": 0.6}, 2, 33),
    ("scaled", {"base": "holomorphic_quadratic", "s": 0.5, "params": {"c": 0.3}}, 2, 33),
    ("bump", {"m": 2}, 2, 33),
    ("trig", {"m": 2, "amp": 0.4}, 3, 13),
]

_suite_cache = {}


def _suite_solutions():
    """Converged, area-decreasing solutions of the suite (solved once)."""
    if not _suite_cache:
        for name, params, n, res in SUITE:
            d = GridDomain.box(n, -1.0, 1.0, res)
            bd = BoundaryData.from_field(sample_preset(name, params, d))
            field, rep = newton_solve(harmonic_extension(bd), bd, SolveConfig(tol=1e-10))
            sup = area_decreasing_audit(field)["sup_wedge2"]
            _suite_cache[(name, repr(params), n)] = (field, rep.converged and sup < 1.0)
    return [(key, f) for key, (f, keep) in _suite_cache.items() if keep]


def _sup(a):
    return float(np.max(np.abs(a)))


def _random_shapes(rng, count):
    return rng.integers(1, 5, size=(count, 2))


def test_c01_svd_oracle(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    count = 10 ** 4
    shapes = _random_shapes(rng, count)
    pool = rng.uniform(-5.0, 5.0, size=(count, 4, 4))
    worst = 0.0
    done = 0
    for m in range(1, 5):
        for n in range(1, 5):
            sel = (shapes[:, 0] == m) & (shapes[:, 1] == n)
            J = pool[sel, :m, :n]
            done += len(J)
            lam = svd_batch(J)[0]
            gram = np.einsum("bki,bkj->bij", J, J) if n <= m else np.einsum("bik,bjk->bij", J, J)
            ref = np.sqrt(np.clip(np.linalg.eigvalsh(gram)[:, ::-1], 0.0, None))
            worst = max(worst, _sup(lam - ref))
    elapsed = time.perf_counter() - t0
    ok = done == count and worst <= 1e-10 and elapsed < 5
    criterion(1, "SVD oracle", ok, f"max |lambda - sqrt(eig)| = {worst:.2e} over {done} J, {elapsed:.2f} s")
    assert ok


def _unit(rng, size, dim):
    v = rng.normal(size=(size, dim))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def test_c02_norm_brute_force(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(102)
    samples = 10 ** 4
    gap_op = gap_w2 = 0.0
    overshoot = 0.0
    for m, n in _random_shapes(rng, 10 ** 3):
        J = rng.uniform(-5.0, 5.0, size=(m, n))
        best = float(np.max(np.linalg.norm(_unit(rng, samples, n) @ J.T, axis=1)))
        gap_op = max(gap_op, op_norm(J) - best)
        overshoot = max(overshoot, best - op_norm(J))
        if n >= 2:
            frames, _ = np.linalg.qr(rng.normal(size=(samples, n, 2)))
            img = J @ frames
            gram = np.einsum("ski,skj->sij", img, img)
            area = np.sqrt(np.clip(gram[:, 0, 0] * gram[:, 1, 1] - gram[:, 0, 1] ** 2, 0.0, None))
            best = float(np.max(area))
            gap_w2 = max(gap_w2, wedge2_norm(J) - best)
            overshoot = max(overshoot, best - wedge2_norm(J))
    elapsed = time.perf_counter() - t0
    ok = gap_op <= 1e-3 and gap_w2 <= 1e-3 and overshoot <= 1e-10 and elapsed < 30
    criterion(2, "norm brute force", ok,
              f"op_norm gap {gap_op:.2e}, wedge2 gap {gap_w2:.2e} (sampled never exceeds: "
              f"{overshoot:.1e}), {elapsed:.1f} s")
    assert ok


def test_c03_exact_solution_residuals(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(103)
    lin = 0.0
    for n, m in [(2, 1), (2, 2), (2, 3), (3, 2), (3, 4)]:
        d = domain(17 if n == 2 else 9, n)
        params = {"A": rng.uniform(-2, 2, size=(m, n)).tolist(), "b": rng.normal(size=m).tolist()}
        lin = max(lin, _sup(divergence_residual(sample_preset("linear", params, d))))
    orders = {}
    for label, preset in (("scherk", SCHERK), ("holomorphic", HOLO)):
        hs, res = [], []
        for r in LEVELS:
            f = sample_preset(*preset, domain(r))
            hs.append(f.domain.h)
            res.append(_sup(divergence_residual(f)))
        orders[label] = refinement_order(hs, res, floor=0.0)
    elapsed = time.perf_counter() - t0
    in_band = {k: v is not None and abs(v - 2.0) <= 0.3 for k, v in orders.items()}
    ok = lin <= 1e-12 and all(in_band.values()) and elapsed < 60
    criterion(3, "exact-solution residuals", ok,
              f"linear sup {lin:.1e}; order scherk {orders['scherk']:.2f}, "
              f"holomorphic {orders['holomorphic']:.2f} (target 2 +- 0.3)")
    assert ok


def test_c04_completing_square(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(104)
    total = 10 ** 5
    shapes = _random_shapes(rng, total)
    worst = -np.inf
    for m in range(1, 5):
        for n in range(1, 5):
            k = int(np.sum((shapes[:, 0] == m) & (shapes[:, 1] == n)))
            p = min(m, n)
            lam = -np.sort(-rng.uniform(0.0, 3.0, size=(k, p)), axis=1)
            if p >= 2:
                # half of the samples sit on the boundary lambda1 lambda2 = 1
                top = lam[:, 0] * lam[:, 1]
                push = (top > 1) | (rng.random(k) < 0.5)
                lam[push] /= np.sqrt(top[push])[:, None]
            h = rng.uniform(-5.0, 5.0, size=(k, m, n, n))
            h = 0.5 * (h + np.swapaxes(h, -1, -2))
            rhs = np.atleast_1d(identity_rhs(lam, h))
            norm2 = np.sum(h ** 2, axis=(-3, -2, -1))
            worst = max(worst, float(np.max(rhs / norm2)))
    # sharpness: lambda1 lambda2 = 4 > 1
    h = np.zeros((2, 2, 2))
    h[0, 1, 0] = h[0, 0, 1] = 1.0
    h[1, 0, 0] = -1.0
    counter = identity_rhs([2.0, 2.0], h)
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-12 and counter > 0 and elapsed < 10
    criterion(4, "completing-square sign", ok,
              f"max rhs/|A|^2 = {worst:.2e} over {total} samples; counterexample rhs = {counter:.3g}")
    assert ok


def test_c05_identity_on_solutions(criterion):
    t0 = time.perf_counter()
    parts = []
    ok = True
    for label, preset in (("scherk", SCHERK), ("holomorphic", HOLO)):
        hs, gaps = [], []
        for r in LEVELS:
            field, _ = solved(preset, r)
            entry = identity_check(field)[3]
            hs.append(field.domain.h)
            gaps.append(entry.details["gap_sup"])
        order = refinement_order(hs, gaps, floor=0.0)
        ok &= order >= 1.0 and gaps[-1] < entry.tolerance
        parts.append(f"{label} order {order:.2f}, gap {gaps[-1]:.2e} < tau {entry.tolerance:.2e}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 120
    criterion(5, "Laplacian identity on solutions", ok, "; ".join(parts))
    assert ok


def test_c06_superharmonicity(criterion):
    t0 = time.perf_counter()
    sols = _suite_solutions()
    bad = []
    slack = -np.inf
    for key, field in sols:
        entry = superharmonicity_check(field, tol=1e-10)
        slack = max(slack, entry.details["max_sharp"] - entry.tolerance)
        if entry.passed is not True:
            bad.append(key)
    elapsed = time.perf_counter() - t0
    ok = len(sols) >= 8 and not bad and elapsed < 60
    criterion(6, "superharmonicity", ok,
              f"{len(sols)} area-decreasing solutions, failures {bad}, max(sharp - tau) = {slack:.2e}")
    assert ok


def test_c07_gauss_map(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(107)
    J = rng.uniform(-2.0, 2.0, size=(10 ** 4, 2, 2))
    w2n = svd_batch(J)[0].prod(axis=-1)
    omega1, _ = grassmann_forms_batch(J)
    decided = np.abs(w2n - 1.0) > 1e-14
    mismatches = int(np.sum(((w2n < 1) != (omega1 > 0)) & decided))
    both = int(np.sum(w2n < 1)), int(np.sum(w2n > 1))
    defects = []
    for r in LEVELS:
        field, _ = solved(HOLO, r)
        Jf, _ = jets(np.asarray(field.values), field.domain)
        _, om2 = grassmann_forms_batch(Jf)
        defects.append((field.domain.h, _sup(om2 - 1.0 / math.sqrt(2.0))))
    c_fit = max(d / h ** 2 for h, d in defects)
    elapsed = time.perf_counter() - t0
    ok = mismatches == 0 and min(both) > 0 and c_fit <= 1.0 and elapsed < 10
    criterion(7, "Gauss-map characterization", ok,
              f"{mismatches} mismatches in 10^4 ({both[0]} area-decreasing, {both[1]} not); "
              f"max |omega2 - 1/sqrt2| / h^2 = {c_fit:.1e}")
    assert ok


@pytest.mark.slow
def test_c08_solver_cross_validation(criterion):
    t0 = time.perf_counter()
    d = domain(33)
    phi = sample_preset("scaled", {"base": HOLO[0], "s": 0.5, "params": HOLO[1]}, d)
    bd = BoundaryData.from_field(phi)
    bump = sample_preset("bump", {"m": 2, "amp": [0.1, -0.05]}, d).values
    init = VectorField(d, bd.apply(np.asarray(harmonic_extension(bd).values) + bump))
    tol = 1e-8
    a, ra = solve(init, bd, SolveConfig(method="newton", tol=tol))
    b, rb = solve(init, bd, SolveConfig(method="mcf", tol=tol))
    diff = _sup(np.asarray(a.values) - np.asarray(b.values))
    start = area_decreasing_audit(init)["sup_wedge2"]
    peak = max(h.sup_wedge2 for h in rb.history)
    elapsed = time.perf_counter() - t0
    ok = ra.converged and rb.converged and diff <= 10 * tol and peak <= start + 1e-3 and elapsed < 300
    criterion(8, "Newton vs MCF", ok,
              f"sup diff {diff:.2e} (<= {10 * tol:.0e}), newton {ra.iterations} it, mcf {rb.iterations} steps, "
              f"max wedge2 {peak:.4f} vs initial {start:.4f}, {elapsed:.0f} s")
    assert ok


def test_c09_euler_lagrange(criterion):
    t0 = time.perf_counter()
    d = domain(33)
    f = sample_preset("trig", {"m": 2, "amp": 0.5}, d)
    R = divergence_residual(f)
    rng = np.random.default_rng(109)
    eps = 1e-4
    worst = 0.0
    for _ in range(20):
        b = interior_bump(d, rng, 2)
        up = volume(VectorField(d, f.values + eps * b))
        down = volume(VectorField(d, f.values - eps * b))
        fd = (up - down) / (2 * eps)
        pred = -np.sum(R * b[d.interior]) * d.cell_volume
        worst = max(worst, abs(fd - pred) / abs(pred))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-4 and elapsed < 60
    criterion(9, "Euler-Lagrange gradient", ok, f"max relative error {worst:.2e} over 20 bumps")
    assert ok


def test_c10_min_principle(criterion):
    sols = _suite_solutions()  # shared with criterion 6, not timed here
    t0 = time.perf_counter()
    bad = []
    margin = np.inf
    for key, field in sols:
        entry = min_principle_check(field, tol=1e-10)
        margin = min(margin, entry.worst_value + entry.tolerance)
        if entry.passed is not True:
            bad.append(key)
    elapsed = time.perf_counter() - t0
    ok = len(sols) >= 8 and not bad and elapsed < 10
    criterion(10, "minimum principle", ok,
              f"{len(sols)} solutions, failures {bad}, min(interior - collar + tau) = {margin:.2e}")
    assert ok
