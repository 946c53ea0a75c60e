"""Shared problem instances for the test modules (cached per session)."""
import functools

import numpy as np

from minsys.grid import BoundaryData, GridDomain, VectorField, sample_preset
from minsys.solvers import SolveConfig, harmonic_extension, newton_solve

BOX = (-1.0, 1.0)
HOLO = ("holomorphic_quadratic", {"c": 0.3})
SCHERK = ("scherk", {})


def domain(resolution, n=2, lower=BOX[0], upper=BOX[1]):
    return GridDomain.box(n, lower, upper, resolution)


@functools.lru_cache(maxsize=None)
def _solved(name, params_key, resolution, scale, tol):
    params = {k: _thaw(v) for k, v in params_key}
    d = domain(resolution)
    phi = sample_preset(name, params, d)
    bd = BoundaryData.from_field(phi)
    if scale != 1.0:
        bd = bd.scaled(scale)
    field, report = newton_solve(harmonic_extension(bd), bd, SolveConfig(tol=tol))
    assert report.converged, report.message
    return field, report


def solved(preset, resolution, scale=1.0, tol=1e-10):
    """Newton solution of the Dirichlet problem with the preset's trace."""
    name, params = preset
    key = tuple(sorted((k, _freeze(v)) for k, v in params.items()))
    return _solved(name, key, resolution, float(scale), tol)


def _freeze(v):
    if isinstance(v, dict):
        return ("__dict__", tuple(sorted((k, _freeze(x)) for k, x in v.items())))
    if isinstance(v, (list, tuple)):
        return tuple(_freeze(x) for x in v)
    return v


def _thaw(v):
    if isinstance(v, tuple) and v[:1] == ("__dict__",):
        return {k: _thaw(x) for k, x in v[1]}
    if isinstance(v, tuple):
        return [_thaw(x) for x in v]
    return v


def linear_field(A, resolution=17, n=2, b=None):
    d = domain(resolution, n)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    params = {"A": A.tolist()}
    if b is not None:
        params["b"] = list(b)
    return sample_preset("linear", params, d)


def random_jacobians(rng, count, low=-5.0, high=5.0, max_dim=4):
    """Random Jacobians of random shapes ``m x n`` with ``1 <= m, n <= max_dim``."""
    out = []
    for _ in range(count):
        m = int(rng.integers(1, max_dim + 1))
        n = int(rng.integers(1, max_dim + 1))
        out.append(rng.uniform(low, high, size=(m, n)))
    return out


def interior_bump(d, rng, m):
    """Smooth Gaussian bump times a random direction, zero on the boundary."""
    coords = d.coords()
    centre = rng.uniform(-0.5, 0.5, size=d.n)
    width = rng.uniform(0.15, 0.35)
    r2 = sum((c - c0) ** 2 for c, c0 in zip(coords, centre))
    prof = np.exp(-r2 / width ** 2)
    prof[d.boundary_mask()] = 0.0
    return prof[..., None] * rng.normal(size=m)


def with_values(field, values):
    return VectorField(field.domain, values)
