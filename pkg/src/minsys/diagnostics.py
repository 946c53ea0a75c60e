"""Audits of the geometric identities and inequalities on solved fields.

Every continuum check skips a collar of ``COLLAR`` grid layers next to the
boundary (box corners and the boundary-adjacent stencils dominate the error
there) and compares against a discretization budget

    tau(h) = c_check * h * scale + 10 * floor

where ``scale`` is the magnitude of the quantities involved on the instance
and ``floor`` is the rounding level measured on the linear field sharing the
instance's central Jacobian, for which every checked quantity is exactly 0.

Audits on fields whose divergence residual exceeds ``tol`` are marked
informational and carry no pass/fail verdict.
"""
from dataclasses import dataclass, field as dc_field
import json
import math

import numpy as np

from .calculus import (
    divergence_residual,
    geometry_field,
    laplace_beltrami,
    shape_field,
    star_omega_nodes,
)
from .errors import DimensionError, PreconditionError
from .grid import VectorField, jets
from .pointwise import grassmann_forms_batch, identity_rhs

COLLAR = 2
TIE_GAP = 1e-6
AREA_MARGIN = 1e-12
ROUNDING_FLOOR = 1e-12
DEFAULT_TOL = 1e-8
AUDIT_NAMES = ("area_decreasing", "superharmonicity", "identity", "gauss_map", "min_principle")

__all__ = [
    "AuditEntry",
    "AuditReport",
    "GeometryAudit",
    "tolerance",
    "audit_mask",
    "area_decreasing_audit",
    "superharmonicity_check",
    "codimension_one_identity",
    "identity_check",
    "gradient_bound_report",
    "gauss_map_audit",
    "min_principle_check",
    "refinement_order",
    "run_audits",
    "AUDIT_NAMES",
    "json_ready",
    "residual_sup",
]


def json_ready(x):
    """Recursively convert numpy scalars to Python and non-finite floats to None."""
    if isinstance(x, dict):
        return {k: json_ready(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [json_ready(v) for v in x]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    return x


@dataclass
class AuditEntry:
    """Outcome of one check.

    ``passed`` is None for informational entries.
    """

    name: str
    passed: object
    worst_node: object
    worst_value: float
    tolerance: float
    informational: bool = False
    details: dict = dc_field(default_factory=dict)

    def to_dict(self):
        return json_ready({
            "name": self.name,
            "passed": self.passed,
            "informational": self.informational,
            "worst_node": None if self.worst_node is None else list(self.worst_node),
            "worst_value": self.worst_value,
            "tolerance": self.tolerance,
            "details": self.details,
        })


@dataclass
class AuditReport:
    entries: list
    residual_sup: float
    tol: float

    @property
    def converged(self):
        return self.residual_sup < self.tol

    @property
    def all_passed(self):
        """True when no pass/fail entry failed (informational entries are ignored)."""
        return all(e.passed is not False for e in self.entries)

    def entry(self, name):
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    def to_dict(self):
        checked = [e for e in self.entries if e.passed is not None]
        return json_ready({
            "schema": "1",
            "converged": self.converged,
            "residual_sup": self.residual_sup,
            "tol": self.tol,
            "summary": {
                "checks": len(self.entries),
                "pass_fail_checks": len(checked),
                "failed": [e.name for e in checked if not e.passed],
                "all_passed": self.all_passed,
            },
            "checks": [e.to_dict() for e in self.entries],
        })

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=False) + "\n"


def tolerance(h, scale, floor=0.0, c_check=1.0):
    """Discretization budget ``c_check * h * scale + 10 * max(floor, 1e-12)``."""
    return c_check * h * scale + 10.0 * max(floor, ROUNDING_FLOOR)


def audit_mask(domain, collar=COLLAR):
    """Boolean mask on the interior block selecting nodes outside the collar."""
    keep = ~domain.collar_mask(collar)
    return keep[domain.interior]


def _interior_index(domain, k):
    """Full-grid multi-index of the flat position ``k`` in the interior block."""
    idx = np.unravel_index(k, domain.interior_shape)
    return tuple(int(i) + 1 for i in idx)


def _worst(values, mask, domain, largest=True):
    """Extreme of ``values`` over ``mask``; returns (value, full-grid node)."""
    if not np.any(mask):
        return float("nan"), None
    v = np.where(mask, values, -np.inf if largest else np.inf)
    k = int(np.argmax(v) if largest else np.argmin(v))
    return float(v.flat[k]), _interior_index(domain, k)


def residual_sup(field):
    """Sup norm of the divergence-form residual."""
    r = divergence_residual(field)
    return float(np.max(np.abs(r))) if r.size else 0.0


def _central_linear(field):
    """Linear field with the Jacobian of ``field`` at the node nearest the centre."""
    domain = field.domain
    J, _ = jets(np.asarray(field.values), domain)
    centre = tuple(s // 2 for s in domain.interior_shape)
    A = J[centre]
    pts = domain.points() - 0.5 * (np.asarray(domain.lower) + np.asarray(domain.upper))
    vals = (pts @ A.T).reshape(domain.shape + (field.m,))
    return VectorField(domain, vals)


@dataclass(frozen=True, eq=False)
class GeometryAudit:
    """Node quantities shared by the audits, all on the interior block.

    ``lhs`` is the Laplace-Beltrami operator of ``ln *Omega``; ``grad2`` is
    ``g^{ij} d_i ln*Omega d_j ln*Omega``; ``rhs`` is the algebraic side of
    the Laplacian identity for ``ln *Omega``; ``separated`` marks nodes whose
    singular values are pairwise more than ``TIE_GAP`` apart.
    """

    field: VectorField
    lambdas: np.ndarray
    wedge2: np.ndarray
    star_omega: np.ndarray
    lhs: np.ndarray
    grad2: np.ndarray
    rhs: np.ndarray
    norm_a2: np.ndarray
    separated: np.ndarray
    mask: np.ndarray

    @classmethod
    def of(cls, field, collar=COLLAR):
        domain = field.domain
        geo = geometry_field(field)
        so_nodes = star_omega_nodes(field)
        log_so = np.log(so_nodes)
        lhs = laplace_beltrami(log_so, field)
        grad, _ = jets(log_so[..., None], domain)
        grad = grad[..., 0, :]
        grad2 = np.einsum("...i,...ij,...j->...", grad, geo.g_inv, grad)
        h = shape_field(field, geo)
        rhs = identity_rhs(geo.lambdas, h)
        norm_a2 = np.sum(h ** 2, axis=(-3, -2, -1))
        lam = geo.lambdas
        separated = np.ones(lam.shape[:-1], dtype=bool)
        for i in range(lam.shape[-1]):
            for j in range(i + 1, lam.shape[-1]):
                separated &= np.abs(lam[..., i] - lam[..., j]) > TIE_GAP
        return cls(field, lam, geo.wedge2, geo.star_omega, lhs, grad2,
                   np.asarray(rhs), norm_a2, separated, audit_mask(domain, collar))


def _floor(field, quantity):
    """Rounding level of ``quantity`` (a GeometryAudit -> array map) on the central linear field."""
    lin = GeometryAudit.of(_central_linear(field))
    q = np.abs(quantity(lin))[lin.mask]
    q = q[np.isfinite(q)]
    return float(np.max(q)) if q.size else 0.0


def _verdict(ok, informational):
    return None if informational else bool(ok)


def area_decreasing_audit(field):
    """Sup of ``|wedge^2 df|`` over interior nodes and the nodes where it reaches 1.

    Returns
    -------
    dict with ``sup_wedge2`` and ``violations`` (full-grid multi-indices, in
    lexicographic order).
    """
    geo = geometry_field(field)
    w = geo.wedge2
    bad = np.argwhere(w >= 1.0 - AREA_MARGIN) + 1
    sup = float(np.max(w)) if w.size else 0.0
    return {"sup_wedge2": sup, "violations": [tuple(int(i) for i in b) for b in bad]}


def area_decreasing_entry(field):
    res = area_decreasing_audit(field)
    w = geometry_field(field).wedge2
    val, node = _worst(w, np.ones(w.shape, dtype=bool), field.domain)
    return AuditEntry(
        "area_decreasing", not res["violations"], node, val, 1.0 - AREA_MARGIN,
        details={"sup_wedge2": res["sup_wedge2"], "violations": [list(v) for v in res["violations"]]},
    )


def _is_informational(field, tol):
    return residual_sup(field) >= tol


def superharmonicity_check(field, tol=DEFAULT_TOL, c_check=1.0, audit=None):
    """Superharmonicity of ``ln *Omega`` and the sharper differential inequality.

    Checks ``L <= tau`` and ``L + G/n <= tau`` on audited nodes, with ``L`` the
    Laplace-Beltrami operator of ``ln *Omega`` and ``G`` its squared gradient
    in the induced metric.  ``worst_value`` is the larger of the two maxima.
    """
    a = audit if audit is not None else GeometryAudit.of(field)
    domain = field.domain
    n = domain.n
    sharp = a.lhs + a.grad2 / n
    scale = max(float(np.max(np.abs(a.lhs[a.mask]), initial=0.0)),
                float(np.max(a.grad2[a.mask], initial=0.0)))
    floor = _floor(field, lambda q: q.lhs + q.grad2 / n)
    tau = tolerance(domain.h, scale, floor, c_check)
    plain_val, plain_node = _worst(a.lhs, a.mask, domain)
    sharp_val, sharp_node = _worst(sharp, a.mask, domain)
    worst, node = (sharp_val, sharp_node) if sharp_val >= plain_val else (plain_val, plain_node)
    info = _is_informational(field, tol)
    ok = plain_val <= tau and sharp_val <= tau
    return AuditEntry(
        "superharmonicity", _verdict(ok, info), node, worst, tau, info,
        details={
            "max_laplacian": plain_val,
            "max_sharp": sharp_val,
            "slack": max(0.0, worst),
            "scale": scale,
            "floor": floor,
        },
    )


def codimension_one_identity(field):
    """Residual of ``Delta *Omega + *Omega |A|^2 = 0`` for a scalar field.

    Returns an array on the interior block; the first interior layer is NaN.
    """
    if field.m != 1:
        raise DimensionError("the codimension-one identity needs m = 1")
    so = star_omega_nodes(field)
    geo = geometry_field(field)
    h = shape_field(field, geo)
    a2 = np.sum(h ** 2, axis=(-3, -2, -1))
    return laplace_beltrami(so, field) + geo.star_omega * a2


def identity_check(field, tol=DEFAULT_TOL, c_check=1.0, audit=None):
    """Compare ``Delta ln *Omega`` with the algebraic right-hand side node by node.

    Nodes with tied singular values are compared too: the cross term is
    unchanged by a rotation inside a tied singular space (the left vectors
    rotate with the right ones), so any Jacobi basis gives the same value.
    The gap over nodes with pairwise separated singular values is reported
    separately in ``details``.

    Returns
    -------
    lhs, rhs, gap : ndarray
        On the interior block; ``gap`` is NaN outside the audited nodes.
    entry : AuditEntry
    """
    a = audit if audit is not None else GeometryAudit.of(field)
    domain = field.domain
    use = a.mask
    gap = np.where(use, np.abs(a.lhs - a.rhs), np.nan)
    sep = use & a.separated
    scale = max(float(np.max(np.abs(a.lhs[use]), initial=0.0)),
                float(np.max(np.abs(a.rhs[use]), initial=0.0)))
    floor = _floor(field, lambda q: q.lhs - q.rhs)
    tau = tolerance(domain.h, scale, floor, c_check)
    val, node = _worst(np.nan_to_num(gap, nan=-np.inf), use, domain)
    info = _is_informational(field, tol)
    rhs_max = float(np.max(a.rhs[use], initial=-np.inf))
    details = {
        "gap_sup": val if np.any(use) else 0.0,
        "gap_mean": float(np.mean(gap[use])) if np.any(use) else 0.0,
        "audited_nodes": int(np.sum(use)),
        "tied_nodes": int(np.sum(use & ~a.separated)),
        "separated_gap_sup": float(np.max(gap[sep])) if np.any(sep) else None,
        "norm_a2_max": float(np.max(a.norm_a2[use], initial=0.0)),
        "rhs_max": rhs_max if np.any(use) else 0.0,
        "scale": scale,
        "floor": floor,
        "pairing": "i, j <= min(n, m), lambda = 0 beyond the rank",
    }
    ok = (not np.any(use)) or val <= tau
    entry = AuditEntry("identity", _verdict(ok, info), node,
                       details["gap_sup"], tau, info, details=details)
    return a.lhs, a.rhs, gap, entry


def gauss_map_audit(field, audit=None):
    """Hemisphere condition of the Gauss map for ``n = m = 2``.

    Pointwise, ``|wedge^2 df| < 1`` holds exactly when both calibration
    heights are positive.  The entry fails on any node where the two sides
    of that equivalence disagree, or where the field is area-decreasing but
    ``min omega1 <= 0``.
    """
    domain = field.domain
    if domain.n != 2 or field.m != 2:
        raise DimensionError(f"Gauss map audit needs n = m = 2, got n={domain.n}, m={field.m}")
    geo = geometry_field(field)
    w1, w2 = grassmann_forms_batch(geo.jacobian)
    every = np.ones(w1.shape, dtype=bool)
    area = geo.wedge2 < 1.0
    positive = (w1 > 0) & (w2 > 0)
    mismatch = (area != positive) & (np.abs(geo.wedge2 - 1.0) > 1e-14)
    val, node = _worst(w1, every, domain, largest=False)
    ok = not np.any(mismatch) and (not np.all(area) or val > 0)
    return AuditEntry(
        "gauss_map", bool(ok), node, val, 0.0,
        details={
            "min_omega1": val,
            "min_omega2": float(np.min(w2)) if w2.size else float("nan"),
            "max_omega2_defect": float(np.max(np.abs(w2 - 1.0 / math.sqrt(2.0)))) if w2.size else 0.0,
            "mismatches": int(np.sum(mismatch)),
        },
    )


def min_principle_check(field, tol=DEFAULT_TOL, c_check=1.0, audit=None):
    """Interior minimum of ``*Omega`` against its minimum on the collar.

    The collar here is the first interior layer, where ``*Omega`` is the
    nearest central-difference value to the boundary.
    """
    a = audit if audit is not None else GeometryAudit.of(field)
    domain = field.domain
    so = a.star_omega
    inner = audit_mask(domain, 2)
    ring = audit_mask(domain, 1) & ~inner
    interior_min, node = _worst(so, inner, domain, largest=False)
    ring_min = float(np.min(so[ring]))
    spread = float(np.max(so) - np.min(so)) if so.size else 0.0
    tau = tolerance(domain.h, spread, 0.0, c_check)
    info = _is_informational(field, tol) or bool(np.any(a.wedge2 >= 1.0 - AREA_MARGIN))
    margin = interior_min - ring_min if np.any(inner) else 0.0
    ok = (not np.any(inner)) or margin >= -tau
    return AuditEntry(
        "min_principle", _verdict(ok, info), node, margin, tau, info,
        details={"interior_min": interior_min, "collar_min": ring_min, "spread": spread},
    )


def gradient_bound_report(field, c2_grid=None):
    """Fit ``|df(x)| <= C1 exp(C2 |f(x)| / d(x))`` over the interior nodes.

    For a fixed ``C2`` the smallest admissible ``C1`` is
    ``max |df| exp(-C2 |f| / d)``.  The reported pair minimizes
    ``ln C1(C2) + C2 * median(|f| / d)``, a convex function of ``C2``; the
    whole frontier over ``c2_grid`` is returned too.

    Raises
    ------
    PreconditionError
        If some component of the field is negative somewhere.
    """
    vals = np.asarray(field.values)
    if np.any(vals < 0):
        raise PreconditionError("gradient bound needs every component f^a >= 0")
    domain = field.domain
    geo = geometry_field(field)
    df = geo.lambdas[..., 0].ravel()
    fnorm = np.linalg.norm(vals[domain.interior], axis=-1).ravel()
    dist = domain.distance_to_boundary()[domain.interior].ravel()
    ratio = fnorm / dist
    if c2_grid is None:
        c2_grid = np.linspace(0.0, 10.0, 201)
    c2_grid = np.asarray(c2_grid, dtype=float)
    sup_df = float(np.max(df)) if df.size else 0.0
    if sup_df == 0.0:
        return {"c1": 0.0, "c2": 0.0, "sup_df": 0.0, "frontier": [],
                "rows": np.stack([df, fnorm, dist], axis=-1)}
    with np.errstate(divide="ignore"):
        log_df = np.log(df)
    c1 = np.array([float(np.exp(np.max(log_df - c2 * ratio))) for c2 in c2_grid])
    med = float(np.median(ratio))
    cost = np.log(c1) + c2_grid * med
    best = int(np.argmin(cost))
    return {
        "c1": float(c1[best]),
        "c2": float(c2_grid[best]),
        "sup_df": sup_df,
        "frontier": [(float(a), float(b)) for a, b in zip(c2_grid, c1)],
        "rows": np.stack([df, fnorm, dist], axis=-1),
    }


def refinement_order(h, err, floor=1e-10):
    """Least-squares slope of ``log err`` against ``log h``.

    Returns None when fewer than two levels lie above ``floor``.
    """
    h = np.asarray(h, dtype=float)
    err = np.asarray(err, dtype=float)
    ok = np.isfinite(err) & (err > floor)
    if np.sum(ok) < 2:
        return None
    slope, _ = np.polyfit(np.log(h[ok]), np.log(err[ok]), 1)
    return float(slope)


def run_audits(field, tol=DEFAULT_TOL, c_check=1.0, names=AUDIT_NAMES, audit=None):
    """Run the applicable audits among ``names`` and collect an :class:`AuditReport`.

    The Gauss map audit is skipped unless ``n = m = 2``.
    """
    a = audit if audit is not None else GeometryAudit.of(field)
    entries = []
    for name in AUDIT_NAMES:
        if name not in names:
            continue
        if name == "area_decreasing":
            entries.append(area_decreasing_entry(field))
        elif name == "superharmonicity":
            entries.append(superharmonicity_check(field, tol, c_check, a))
        elif name == "identity":
            entries.append(identity_check(field, tol, c_check, a)[3])
        elif name == "gauss_map" and field.n == 2 and field.m == 2:
            entries.append(gauss_map_audit(field, a))
        elif name == "min_principle":
            entries.append(min_principle_check(field, tol, c_check, a))
    return AuditReport(entries, residual_sup(field), tol)
