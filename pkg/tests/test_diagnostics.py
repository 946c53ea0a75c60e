import json
import math

import numpy as np
import pytest

from minsys.diagnostics import (
    AUDIT_NAMES,
    GeometryAudit,
    area_decreasing_audit,
    audit_mask,
    codimension_one_identity,
    gauss_map_audit,
    gradient_bound_report,
    identity_check,
    min_principle_check,
    refinement_order,
    run_audits,
    superharmonicity_check,
    tolerance,
)
from minsys.errors import DimensionError, PreconditionError
from minsys.grid import GridDomain, VectorField, sample_preset
from minsys.pointwise import identity_rhs

from support import HOLO, SCHERK, domain, linear_field, solved

LIN_A = [[0.4, -0.2], [0.3, 0.5]]


def test_tolerance_formula():
    assert tolerance(0.1, 2.0) == pytest.approx(0.2 + 1e-11)
    assert tolerance(0.1, 2.0, floor=1e-6, c_check=3.0) == pytest.approx(0.6 + 1e-5)


def test_audit_mask_excludes_collar():
    d = domain(9)
    mask = audit_mask(d)
    assert mask.shape == d.interior_shape
    assert mask.sum() == 5 * 5
    assert not mask[0].any() and mask[1, 1]


def test_refinement_order():
    h = np.array([0.1, 0.05, 0.025])
    assert refinement_order(h, 3 * h ** 2) == pytest.approx(2.0)
    assert refinement_order(h, [1e-13, 1e-14, 1e-12]) is None


# --- area-decreasing -------------------------------------------------------------

def test_area_audit_scalar_field():
    res = area_decreasing_audit(sample_preset("trig", {"amp": 3.0}, domain(9)))
    assert res == {"sup_wedge2": 0.0, "violations": []}


def test_area_audit_holomorphic():
    d = domain(17)
    res = area_decreasing_audit(sample_preset(*HOLO, d))
    x, y = d.coords()
    brute = np.max((2 * 0.3) ** 2 * (x * x + y * y)[d.interior])
    assert res["sup_wedge2"] == pytest.approx(brute, abs=1e-12)
    assert res["sup_wedge2"] < 1 and not res["violations"]


def test_area_audit_boundary_case():
    d = domain(7)
    res = area_decreasing_audit(linear_field(np.eye(2), resolution=7))
    assert res["sup_wedge2"] == pytest.approx(1.0, abs=1e-14)
    assert len(res["violations"]) == 5 * 5
    assert all(d.is_interior(v) for v in res["violations"])


# --- superharmonicity ------------------------------------------------------------

def test_superharmonicity_linear_is_exactly_flat():
    f = linear_field(LIN_A, resolution=17)
    a = GeometryAudit.of(f)
    assert np.max(np.abs(a.lhs[a.mask])) < 1e-12
    assert np.max(np.abs(a.grad2[a.mask])) < 1e-24
    entry = superharmonicity_check(f, audit=a)
    assert entry.passed is True


def test_codimension_one_identity_on_scherk():
    errs = []
    for r in (17, 33, 65):
        f = sample_preset(*SCHERK, domain(r))
        res = codimension_one_identity(f)[audit_mask(f.domain)]
        errs.append(np.max(np.abs(res)))
    assert refinement_order([2 / 16, 2 / 32, 2 / 64], errs) >= 1.0
    with pytest.raises(DimensionError):
        codimension_one_identity(sample_preset(*HOLO, domain(9)))


@pytest.mark.parametrize("preset", [HOLO, SCHERK])
def test_superharmonicity_on_solutions(preset):
    field, _ = solved(preset, 33)
    entry = superharmonicity_check(field)
    assert entry.passed is True
    assert entry.details["max_laplacian"] <= entry.tolerance
    assert entry.details["max_sharp"] <= entry.tolerance


def test_audits_informational_on_non_solution():
    f = sample_preset("trig", {"m": 2, "amp": 0.5}, domain(17))
    rep = run_audits(f)
    assert not rep.converged
    for name in ("superharmonicity", "identity", "min_principle"):
        e = rep.entry(name)
        assert e.informational and e.passed is None
    assert rep.entry("area_decreasing").passed is True


# --- identity --------------------------------------------------------------------

def test_identity_linear():
    f = linear_field(LIN_A, resolution=17)
    lhs, rhs, gap, entry = identity_check(f)
    mask = audit_mask(f.domain)
    assert np.max(np.abs(lhs[mask])) < 1e-12
    assert np.max(np.abs(rhs[mask])) < 1e-24
    assert entry.passed is True


@pytest.mark.parametrize("preset,order", [(SCHERK, 1.0), (HOLO, 1.0)])
def test_identity_gap_decays(preset, order):
    hs, gaps = [], []
    for r in (17, 33, 65):
        field, _ = solved(preset, r)
        *_, entry = identity_check(field)
        assert entry.passed is True
        hs.append(field.domain.h)
        gaps.append(entry.details["gap_sup"])
    assert refinement_order(hs, gaps) >= order


def test_identity_rhs_nonpositive_on_area_decreasing_solution():
    field, _ = solved(HOLO, 33)
    a = GeometryAudit.of(field)
    assert np.all(a.wedge2 < 1)
    assert np.all(a.rhs <= 1e-12 * a.norm_a2)
    np.testing.assert_array_equal(a.rhs, identity_rhs(a.lambdas, _shape(field)))


def _shape(field):
    from minsys.calculus import shape_field

    return shape_field(field)


def test_identity_reports_tied_nodes():
    field, _ = solved(HOLO, 17)
    *_, entry = identity_check(field)
    assert entry.details["tied_nodes"] == entry.details["audited_nodes"]
    assert entry.details["separated_gap_sup"] is None


# --- gradient bound ---------------------------------------------------------------

def test_gradient_bound_rejects_negative_components():
    with pytest.raises(PreconditionError):
        gradient_bound_report(sample_preset(*HOLO, domain(9)))


def test_gradient_bound_constant():
    f = VectorField(domain(9), np.full(domain(9).shape, 2.0))
    rep = gradient_bound_report(f)
    assert rep["sup_df"] == 0.0 and rep["c1"] == 0.0


def test_gradient_bound_linear_on_shifted_domain():
    d = GridDomain.box(2, 1.0, 2.0, 17)
    f = sample_preset("linear", {"A": [[0.5, 0.25]]}, d)
    rep = gradient_bound_report(f)
    lip = math.hypot(0.5, 0.25)
    assert rep["sup_df"] == pytest.approx(lip, rel=1e-12)
    c2_zero = dict(rep["frontier"])[0.0]
    assert c2_zero == pytest.approx(lip, rel=1e-12)
    assert np.isfinite(rep["c1"]) and np.isfinite(rep["c2"])
    df, fn, dist = rep["rows"].T
    assert np.all(df <= rep["c1"] * np.exp(rep["c2"] * fn / dist) * (1 + 1e-12))


def test_gradient_bound_family_bounded():
    c1s = []
    for s in (0.2, 0.4, 0.6, 0.8, 1.0):
        field, _ = solved(("scaled", {"base": "holomorphic_quadratic", "s": s, "offset": [1.0, 1.0],
                                      "params": {"c": 0.3}}), 17)
        rep = gradient_bound_report(field)
        c1s.append(rep["c1"])
        assert rep["c2"] <= 10
    assert max(c1s) < 1.0


# --- Gauss map ---------------------------------------------------------------------

def test_gauss_map_flat():
    entry = gauss_map_audit(sample_preset("zero", {"m": 2}, domain(9)))
    assert entry.passed
    assert entry.worst_value == pytest.approx(1 / math.sqrt(2), abs=1e-15)
    assert entry.details["max_omega2_defect"] < 1e-15


def test_gauss_map_holomorphic_calibrated():
    defects = []
    for r in (17, 33, 65):
        field, _ = solved(HOLO, r)
        entry = gauss_map_audit(field)
        assert entry.passed and entry.worst_value > 0
        defects.append(entry.details["max_omega2_defect"])
    assert max(defects) < 1e-6


def test_gauss_map_dimension_error():
    with pytest.raises(DimensionError):
        gauss_map_audit(sample_preset("zero", {"m": 1}, domain(9)))


def test_gauss_map_flags_non_area_decreasing_field():
    entry = gauss_map_audit(linear_field([[1.5, 0.0], [0.0, 1.0]], resolution=7))
    assert entry.passed  # equivalence holds: not area-decreasing and omega1 < 0
    assert entry.worst_value < 0


# --- minimum principle -------------------------------------------------------------

def test_min_principle_linear_equality():
    entry = min_principle_check(linear_field(LIN_A, resolution=17))
    assert entry.passed
    assert abs(entry.worst_value) < 1e-14


def test_min_principle_scherk_collar():
    field, _ = solved(SCHERK, 33)
    entry = min_principle_check(field)
    assert entry.passed and entry.worst_value > 0


def test_min_principle_zero_field():
    f = sample_preset("zero", {"m": 2}, domain(9))
    a = GeometryAudit.of(f)
    assert np.all(a.star_omega == 1.0)
    assert min_principle_check(f, audit=a).passed


# --- report -------------------------------------------------------------------------

def test_report_lists_each_check_once():
    field, _ = solved(HOLO, 17)
    rep = run_audits(field)
    names = [e.name for e in rep.entries]
    assert names == list(AUDIT_NAMES)
    doc = json.loads(rep.to_json())
    assert doc["schema"] == "1" and doc["summary"]["all_passed"]
    for check in doc["checks"]:
        assert check["passed"] is True


def test_audits_invariant_under_component_permutation():
    field, _ = solved(("trig", {"m": 3, "amp": 0.4}), 17)
    a = run_audits(field)
    b = run_audits(field.permuted([2, 0, 1]))
    for ea, eb in zip(a.entries, b.entries):
        assert ea.passed == eb.passed
        assert ea.worst_value == pytest.approx(eb.worst_value, rel=1e-9, abs=1e-12)
        assert ea.worst_node == eb.worst_node
