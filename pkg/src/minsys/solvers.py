"""Dirichlet solvers for the minimal surface system on a box.

Two routes to the same discrete problem:

* :func:`mcf_solve` relaxes the graph by explicit nonparametric mean
  curvature flow until the flow velocity falls below ``tol``;
* :func:`newton_solve` runs damped Newton on the divergence-form residual,
  optionally with continuation in the size of the boundary data.

Both keep the boundary nodes bitwise equal to the prescribed data.
"""
from dataclasses import dataclass, field as dc_field
import logging
import time

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as spla

from .calculus import (
    divergence_residual,
    divergence_residual_array,
    mcf_velocity,
    volume,
)
from .errors import (
    ConfigError,
    DivergenceError,
    PreconditionError,
    SingularLinearizationError,
    StagnationError,
)
from .grid import VectorField, jets
from .pointwise import metric_batch, svd_batch

logger = logging.getLogger(__name__)

MAX_BACKTRACKS = 30
LINEAR_RTOL = 1e-10
COMPLEX_STEP = 1e-30


@dataclass(frozen=True)
class SolveConfig:
    """Solver settings.

    ``dt_factor=None`` selects ``1 / (4 n)``.
    """

    method: str = "newton"
    dt_factor: float = None
    tol: float = 1e-8
    max_iter: int = 20000
    continuation_steps: int = 4
    damping: float = 0.5

    def __post_init__(self):
        if self.method not in ("mcf", "newton"):
            raise ConfigError(f"method must be 'mcf' or 'newton', got {self.method!r}")
        if self.dt_factor is not None and not 0.0 < self.dt_factor <= 0.25:
            raise ConfigError(f"dt_factor must lie in (0, 0.25], got {self.dt_factor}")
        if not self.tol > 0.0:
            raise ConfigError("tol must be positive")
        if int(self.max_iter) < 1:
            raise ConfigError("max_iter must be >= 1")
        if int(self.continuation_steps) < 1:
            raise ConfigError("continuation_steps must be >= 1")
        if not 0.0 < self.damping < 1.0:
            raise ConfigError("damping must lie in (0, 1)")

    def resolved_dt_factor(self, n):
        return self.dt_factor if self.dt_factor is not None else 1.0 / (4 * n)


@dataclass(frozen=True)
class HistoryEntry:
    residual: float
    sup_wedge2: float
    min_star_omega: float
    volume: float


@dataclass
class SolveReport:
    method: str
    converged: bool = False
    iterations: int = 0
    residual_sup: float = float("nan")
    residual_l2: float = float("nan")
    history: list = dc_field(default_factory=list)
    wall_time: float = 0.0
    message: str = ""

    def to_dict(self, include_wall_time=False):
        """JSON-ready dictionary; non-finite numbers become ``None``."""

        def num(x):
            x = float(x)
            return x if np.isfinite(x) else None

        out = {
            "schema": "1",
            "method": self.method,
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            "residual_sup": num(self.residual_sup),
            "residual_l2": num(self.residual_l2),
            "message": self.message,
            "history": [
                {
                    "residual": num(h.residual),
                    "sup_wedge2": num(h.sup_wedge2),
                    "min_star_omega": num(h.min_star_omega),
                    "volume": num(h.volume),
                }
                for h in self.history
            ],
        }
        if include_wall_time:
            out["wall_time"] = num(self.wall_time)
        return out


def _snapshot(values, domain, residual):
    J, _ = jets(values, domain)
    lam = svd_batch(J)[0]
    wedge = lam[..., 0] * lam[..., 1] if lam.shape[-1] > 1 else np.zeros(lam.shape[:-1])
    star = metric_batch(J)[3]
    return HistoryEntry(
        residual=float(residual),
        sup_wedge2=float(np.max(wedge)),
        min_star_omega=float(np.min(star)),
        volume=volume(VectorField(domain, values)),
    )


def _sup(a):
    return float(np.max(np.abs(a))) if a.size else 0.0


def _l2(a, domain):
    return float(np.sqrt(np.sum(a * a) * domain.cell_volume))


def _start(initial, boundary):
    if initial.domain != boundary.domain or initial.m != boundary.m:
        raise PreconditionError("initial field and boundary data live on different grids")
    if not boundary.matches(initial):
        raise PreconditionError("initial field does not match the boundary data on the boundary")
    return np.array(initial.values, dtype=float)


def harmonic_extension(boundary):
    """Componentwise discrete harmonic extension of Dirichlet data.

    Solves the standard ``(2n+1)``-point Laplace equation with the boundary
    values fixed; a sparse direct solve keeps the result deterministic.
    """
    domain = boundary.domain
    vals = boundary.apply(np.zeros(domain.shape + (boundary.m,)))
    inner = domain.interior_shape
    size = int(np.prod(inner))
    h = domain.spacing
    ops = []
    for k, r in enumerate(inner):
        d1 = sparse.diags([np.ones(r - 1), -2.0 * np.ones(r), np.ones(r - 1)], [-1, 0, 1]) / h[k] ** 2
        mats = [sparse.identity(q) for q in inner]
        mats[k] = d1
        op = mats[0]
        for mat in mats[1:]:
            op = sparse.kron(op, mat)
        ops.append(op)
    A = sparse.csc_matrix(sum(ops))
    unit = np.eye(domain.n, dtype=int)
    rhs = np.zeros(inner + (boundary.m,))
    # move known boundary neighbours to the right-hand side
    for k in range(domain.n):
        for sign in (1, -1):
            sl_nb = tuple(slice(1 + sign * unit[k][j], r - 1 + sign * unit[k][j]) for j, r in enumerate(domain.shape))
            nb = vals[sl_nb].copy()
            if sign == 1:
                nb[tuple(slice(None, -1) if j == k else slice(None) for j in range(domain.n))] = 0.0
            else:
                nb[tuple(slice(1, None) if j == k else slice(None) for j in range(domain.n))] = 0.0
            rhs -= nb / h[k] ** 2
    sol = spla.splu(A).solve(rhs.reshape(size, boundary.m))
    vals[domain.interior] = sol.reshape(inner + (boundary.m,))
    return VectorField(domain, vals)


# ----------------------------------------------------------------------------
# mean curvature flow


def mcf_step(field, dt):
    """One explicit flow step; boundary values are carried over untouched."""
    vel = mcf_velocity(field)
    return _mcf_advance(np.asarray(field.values), field.domain, vel, dt, 0)


def _mcf_advance(values, domain, vel, dt, iteration):
    new = np.array(values, copy=True)
    new[domain.interior] = values[domain.interior] + dt * vel
    bad = ~np.isfinite(new[domain.interior])
    if np.any(bad):
        where = np.argwhere(bad.any(axis=-1))[0]
        node = tuple(int(i) + 1 for i in where)
        raise DivergenceError(f"non-finite values at node {node} after step {iteration}", node, iteration)
    return VectorField(domain, new)


def mcf_solve(initial, boundary, cfg=None):
    """Relax ``initial`` by mean curvature flow until ``sup|velocity| < tol``."""
    cfg = cfg or SolveConfig(method="mcf")
    t0 = time.perf_counter()
    values = _start(initial, boundary)
    domain = initial.domain
    dt = cfg.resolved_dt_factor(domain.n) * domain.h ** 2
    report = SolveReport(method="mcf")
    field = VectorField(domain, values)
    vel = mcf_velocity(field)
    res = _sup(vel)
    try:
        while res >= cfg.tol and report.iterations < cfg.max_iter:
            field = _mcf_advance(np.asarray(field.values), domain, vel, dt, report.iterations + 1)
            vel = mcf_velocity(field)
            res = _sup(vel)
            report.iterations += 1
            report.history.append(_snapshot(np.asarray(field.values), domain, res))
    except DivergenceError as exc:
        report.message = str(exc)
        report.converged = False
        report.wall_time = time.perf_counter() - t0
        return field, report
    report.converged = res < cfg.tol
    div = divergence_residual(field)
    report.residual_sup = _sup(div)
    report.residual_l2 = _l2(div, domain)
    if not report.converged:
        report.message = f"max_iter={cfg.max_iter} reached with velocity {res:.3e}"
    report.wall_time = time.perf_counter() - t0
    logger.info("mcf: %d steps, converged=%s, residual %.3e", report.iterations, report.converged, report.residual_sup)
    return field, report


# ----------------------------------------------------------------------------
# Newton


def _unknown_index(domain, m):
    inner = domain.interior_shape
    return np.arange(int(np.prod(inner)) * m).reshape(inner + (m,))


def linearization(values, domain):
    """Sparse Jacobian of the divergence residual w.r.t. interior unknowns.

    Columns are recovered by complex-step differencing of the residual, many
    at a time: unknowns whose node indices agree modulo 3 in every axis (and
    share a component) have disjoint stencils, so one perturbation per colour
    class suffices.
    """
    n = domain.n
    m = values.shape[-1]
    inner = domain.interior_shape
    idx = _unknown_index(domain, m)
    grids = np.meshgrid(*[np.arange(r) for r in inner], indexing="ij")
    rows, cols, data = [], [], []
    offsets = np.array(np.meshgrid(*[[-1, 0, 1]] * n, indexing="ij")).reshape(n, -1).T
    base = np.asarray(values, dtype=complex)
    for colour in np.ndindex(*(3,) * n):
        sel = np.ones(inner, dtype=bool)
        for k in range(n):
            sel &= grids[k] % 3 == colour[k]
        for a in range(m):
            pert = base.copy()
            block = pert[domain.interior]
            block[..., a][sel] += 1j * COMPLEX_STEP
            deriv = divergence_residual_array(pert, domain).imag / COMPLEX_STEP
            for off in offsets:
                src = [g + o for g, o in zip(grids, off)]
                ok = np.ones(inner, dtype=bool)
                for k in range(n):
                    ok &= (src[k] >= 0) & (src[k] < inner[k])
                for k in range(n):
                    ok &= np.where(ok, src[k] % 3 == colour[k], False)
                if not np.any(ok):
                    continue
                src_idx = tuple(np.where(ok, s, 0) for s in src)
                col = idx[src_idx + (a,)][ok]
                for b in range(m):
                    rows.append(idx[..., b][ok])
                    cols.append(col)
                    data.append(deriv[..., b][ok])
    size = idx.size
    return sparse.csr_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(size, size)
    )


def _linear_solve(A, b):
    try:
        ilu = spla.spilu(sparse.csc_matrix(A), drop_tol=1e-6, fill_factor=20)
    except RuntimeError as exc:
        raise SingularLinearizationError(
            f"linearization is singular ({exc}); try more continuation steps"
        ) from exc
    M = spla.LinearOperator(A.shape, ilu.solve)
    x, info = spla.gmres(A, b, rtol=LINEAR_RTOL, atol=0.0, M=M, restart=200, maxiter=50)
    if info != 0 or not np.all(np.isfinite(x)):
        raise SingularLinearizationError(
            f"linear solve did not reach rtol={LINEAR_RTOL} (info={info}); try more continuation steps"
        )
    return x


def _newton_stage(values, domain, cfg, report):
    """Newton iterations at fixed boundary data; updates ``values`` in place."""
    res_arr = divergence_residual_array(values, domain)
    res = _sup(res_arr)
    while res >= cfg.tol:
        if report.iterations >= cfg.max_iter:
            return res_arr
        A = linearization(values, domain)
        step = _linear_solve(A, -res_arr.ravel()).reshape(res_arr.shape)
        t = 1.0
        for _ in range(MAX_BACKTRACKS):
            trial = values.copy()
            trial[domain.interior] = values[domain.interior] + t * step
            trial_arr = divergence_residual_array(trial, domain)
            trial_res = _sup(trial_arr)
            if np.isfinite(trial_res) and trial_res < res:
                break
            t *= cfg.damping
        else:
            raise StagnationError(
                f"line search failed {MAX_BACKTRACKS} times at iteration {report.iterations} (residual {res:.3e})"
            )
        values[...] = trial
        res_arr, res = trial_arr, trial_res
        report.iterations += 1
        report.history.append(_snapshot(values, domain, res))
    return res_arr


def newton_solve(initial, boundary, cfg=None):
    """Damped Newton with continuation ``s = 1/K, 2/K, ..., 1`` in the boundary data.

    Stage ``k`` starts from the previous stage's solution rescaled by
    ``s_k / s_{k-1}`` (the first from ``s_1 * initial``) with the boundary set
    to ``s_k * phi``; the final stage uses ``phi`` itself.  Because the
    first stage rescales the initial guess, a warm start that is already
    close to the solution should use ``continuation_steps=1``.
    """
    cfg = cfg or SolveConfig()
    t0 = time.perf_counter()
    values = _start(initial, boundary)
    domain = initial.domain
    report = SolveReport(method="newton")
    steps = int(cfg.continuation_steps)
    mask = domain.boundary_mask()
    prev = 1.0
    finished = False
    try:
        for k in range(1, steps + 1):
            s = k / steps
            values = values * (s / prev)
            values[mask] = boundary.values if k == steps else s * boundary.values
            res_arr = _newton_stage(values, domain, cfg, report)
            prev = s
            if _sup(res_arr) >= cfg.tol:
                break
            finished = k == steps
    except (StagnationError, SingularLinearizationError) as exc:
        report.message = str(exc)
        _finish(report, values, domain, t0)
        exc.report = report
        exc.field = VectorField(domain, values)
        raise
    _finish(report, values, domain, t0)
    report.converged = finished and report.residual_sup < cfg.tol
    if not report.converged:
        report.message = f"max_iter={cfg.max_iter} reached with residual {report.residual_sup:.3e}"
    logger.info("newton: %d iterations, converged=%s, residual %.3e", report.iterations, report.converged, report.residual_sup)
    return VectorField(domain, values), report


def _finish(report, values, domain, t0):
    final = divergence_residual_array(values, domain)
    report.residual_sup = _sup(final)
    report.residual_l2 = _l2(final, domain)
    report.wall_time = time.perf_counter() - t0


def solve(initial, boundary, cfg):
    """Dispatch on ``cfg.method``."""
    if cfg.method == "mcf":
        return mcf_solve(initial, boundary, cfg)
    return newton_solve(initial, boundary, cfg)
