"""Assembled geometry of the graph of a grid field.

Discretization
--------------
Every box cell contributes ``2^n`` *corner stencils*.  At the corner ``s`` of a
cell the gradient is formed from the ``n`` cell edges meeting there (forward
or backward differences), which is exact for affine maps.  The discrete
volume is the cell volume times the mean of ``sqrt(det(I + P^T P))`` over the
corner stencils, and the divergence-form residual is the exact negative
gradient of that sum divided by the cell volume.  Written out, it is a
flux-form divergence whose face flux is the arithmetic mean, over the
``2^n`` corner stencils sharing the face, of ``sqrt(g) g^{ij} d_j f``.

The Laplace-Beltrami operator reuses the same fluxes with ``u`` in place of
``f`` and divides by the lumped mass (mean of ``sqrt(g)`` over the corner
stencils at a node), so it is symmetric for the mass-weighted inner product.

The node-based quantities (metric, ``*Omega``, second fundamental form,
non-divergence operator) use central-difference jets from :mod:`.grid`.
"""
from dataclasses import dataclass
import itertools

import numpy as np

from .errors import BoundaryNodeError
from .grid import compute_jet, jets
from .pointwise import (
    ShapeTensor,
    metric_batch,
    shape_tensor_batch,
    svd_batch,
)


def _corner_bits(n):
    return list(itertools.product((0, 1), repeat=n))


def _edge_slices(domain, s, k):
    """Slices into the axis-``k`` edge-difference array for corner ``s``."""
    sl = []
    for j, r in enumerate(domain.resolution):
        if j == k:
            sl.append(slice(0, r - 1))
        else:
            sl.append(slice(s[j], s[j] + r - 1))
    return tuple(sl)


def _node_slices(domain, s):
    """Slices into a node array selecting the corner ``s`` of every cell."""
    return tuple(slice(b, b + r - 1) for b, r in zip(s, domain.resolution))


class _CornerStencils:
    """Corner gradients of a node array together with their metric data."""

    def __init__(self, values, domain):
        self.domain = domain
        n = domain.n
        h = domain.spacing
        self.bits = _corner_bits(n)
        self.edges = [np.diff(values, axis=k) / h[k] for k in range(n)]
        self.P = []
        for s in self.bits:
            cols = [self.edges[k][_edge_slices(domain, s, k)] for k in range(n)]
            self.P.append(np.stack(cols, axis=-1))
        eye = np.eye(n)
        self.g = [eye + np.swapaxes(P, -1, -2) @ P for P in self.P]
        self.sqrt_g = [np.sqrt(np.linalg.det(g)) for g in self.g]
        self.g_inv = [np.linalg.inv(g) for g in self.g]

    def volume(self):
        total = sum(np.sum(sg) for sg in self.sqrt_g)
        return total * self.domain.cell_volume / len(self.bits)

    def divergence(self, corner_flux):
        """Flux-form divergence on the interior block.

        ``corner_flux[c]`` has shape ``cells + (..., n)`` (last axis: direction)
        and belongs to corner ``self.bits[c]``.
        """
        domain = self.domain
        n = domain.n
        h = domain.spacing
        tail = corner_flux[0].shape[n:-1]
        out = 0
        for k in range(n):
            shape = tuple(r - 1 if j == k else r for j, r in enumerate(domain.resolution)) + tail
            acc = np.zeros(shape, dtype=corner_flux[0].dtype)
            for s, F in zip(self.bits, corner_flux):
                acc[_edge_slices(domain, s, k)] += F[..., k]
            acc /= len(self.bits)
            above = tuple(slice(1, r - 1) for r in domain.resolution)
            below = tuple(slice(0, r - 2) if j == k else slice(1, r - 1) for j, r in enumerate(domain.resolution))
            out = out + (acc[above] - acc[below]) / h[k]
        return out

    def lumped_mass(self):
        """Mean of ``sqrt(g)`` over the corner stencils meeting at each interior node."""
        domain = self.domain
        acc = np.zeros(domain.shape, dtype=self.sqrt_g[0].dtype)
        for s, sg in zip(self.bits, self.sqrt_g):
            acc[_node_slices(domain, s)] += sg
        return acc[domain.interior] / len(self.bits)

    def map_flux(self):
        """``sqrt(g) P g^{-1}`` per corner: derivative of the area density."""
        return [sg[..., None, None] * (P @ gi) for P, sg, gi in zip(self.P, self.sqrt_g, self.g_inv)]


def _values(field):
    return np.asarray(field.values)


def divergence_residual_array(values, domain):
    """Divergence-form residual of a raw node array (real or complex)."""
    cs = _CornerStencils(values, domain)
    return cs.divergence(cs.map_flux())


def divergence_residual(field):
    """Discrete ``sum_i d_i(sqrt(g) g^{ij} d_j f^a)`` on the interior block.

    Returns an array of shape ``interior_shape + (m,)``.
    """
    return divergence_residual_array(_values(field), field.domain)


def volume(field):
    """Discrete volume of the graph: cell volume times corner-averaged ``sqrt(g)``."""
    return float(np.real(_CornerStencils(_values(field), field.domain).volume()))


def laplace_beltrami(u, field):
    """Laplace-Beltrami operator of the graph metric applied to a node function.

    Parameters
    ----------
    u : ndarray, shape ``field.domain.shape``
        Non-finite entries propagate only to the interior nodes whose stencil
        touches them.
    field : VectorField

    Returns
    -------
    ndarray, shape ``field.domain.interior_shape``
    """
    domain = field.domain
    u = np.asarray(u, dtype=float)
    if u.shape != domain.shape:
        raise ValueError(f"u must have shape {domain.shape}, got {u.shape}")
    cs = _CornerStencils(_values(field), domain)
    h = domain.spacing
    du = [np.diff(u, axis=k) / h[k] for k in range(domain.n)]
    fluxes = []
    for s, sg, gi in zip(cs.bits, cs.sqrt_g, cs.g_inv):
        grad = np.stack([du[k][_edge_slices(domain, s, k)] for k in range(domain.n)], axis=-1)
        fluxes.append(sg[..., None] * np.einsum("...ij,...j->...i", gi, grad))
    return cs.divergence(fluxes) / cs.lumped_mass()


def lumped_mass(field):
    """Node weights (``sqrt(g)`` averaged over corner stencils) on the interior block."""
    return np.real(_CornerStencils(_values(field), field.domain).lumped_mass())


@dataclass(frozen=True, eq=False)
class GeometryField:
    """Node-wise metric and singular data on the interior block."""

    jacobian: np.ndarray
    hessian: np.ndarray
    lambdas: np.ndarray
    right_basis: np.ndarray
    left_basis: np.ndarray
    g: np.ndarray
    g_inv: np.ndarray
    sqrt_g: np.ndarray
    star_omega: np.ndarray

    @property
    def log_star_omega(self):
        return np.log(self.star_omega)

    @property
    def wedge2(self):
        if self.lambdas.shape[-1] < 2:
            return np.zeros(self.lambdas.shape[:-1])
        return self.lambdas[..., 0] * self.lambdas[..., 1]


def geometry_field(field):
    J, H = jets(_values(field), field.domain)
    lam, V, U = svd_batch(J)
    g, g_inv, sqrt_g, star = metric_batch(J)
    return GeometryField(J, H, lam, V, U, g, g_inv, sqrt_g, star)


def star_omega_nodes(field):
    """``*Omega`` on every node: central differences inside, NaN on the boundary."""
    out = np.full(field.domain.shape, np.nan)
    J, _ = jets(_values(field), field.domain)
    out[field.domain.interior] = metric_batch(J)[3]
    return out


def nondivergence_operator(field):
    """``g^{ij} d_i d_j f^a`` from central-difference jets, interior block."""
    J, H = jets(_values(field), field.domain)
    g_inv = metric_batch(J)[1]
    return np.einsum("...ij,...aij->...a", g_inv, H)


def perp_residual(field):
    """Normal-projected non-divergence residual ``(I + J J^T)^{-1} g^{ij} f_ij``.

    This is the target part of the mean curvature vector; it vanishes exactly
    where the minimal surface system holds.
    """
    J, H = jets(_values(field), field.domain)
    g_inv = metric_batch(J)[1]
    w = np.einsum("...ij,...aij->...a", g_inv, H)
    m = J.shape[-2]
    proj = np.eye(m) + J @ np.swapaxes(J, -1, -2)
    return np.linalg.solve(proj, w[..., None])[..., 0]


def mcf_velocity_array(values, domain):
    """Graphical mean curvature flow velocity of a raw node array.

    Uses the pointwise identity ``g^{ij} f_ij = (I + J J^T) div(F) / sqrt(g)``
    with the divergence taken in flux form, so the discrete stationary points
    of the flow are exactly the zeros of :func:`divergence_residual`.
    """
    div = divergence_residual_array(values, domain)
    J, _ = jets(values, domain)
    m = J.shape[-2]
    lift = np.eye(m) + J @ np.swapaxes(J, -1, -2)
    sqrt_g = metric_batch(J)[2]
    return np.einsum("...ab,...b->...a", lift, div) / sqrt_g[..., None]


def mcf_velocity(field):
    """Nonparametric mean curvature flow velocity on the interior block."""
    return mcf_velocity_array(_values(field), field.domain)


@dataclass(frozen=True, eq=False)
class ResidualField:
    r_div: np.ndarray
    r_perp: np.ndarray
    cell_volume: float

    @staticmethod
    def _sup(r):
        return float(np.max(np.abs(r))) if r.size else 0.0

    def _l2(self, r):
        return float(np.sqrt(np.sum(r * r) * self.cell_volume))

    @property
    def div_sup(self):
        return self._sup(self.r_div)

    @property
    def div_l2(self):
        return self._l2(self.r_div)

    @property
    def perp_sup(self):
        return self._sup(self.r_perp)

    @property
    def perp_l2(self):
        return self._l2(self.r_perp)


def residual_field(field):
    return ResidualField(divergence_residual(field), perp_residual(field), field.domain.cell_volume)


def shape_field(field, geometry=None):
    """Second fundamental form coefficients ``h[..., a, i, j]`` on the interior block."""
    geo = geometry if geometry is not None else geometry_field(field)
    return shape_tensor_batch(geo.lambdas, geo.right_basis, geo.left_basis, geo.hessian)


def second_fundamental_form(field, node):
    """Shape tensor at one interior node in frames adapted to the SVD of ``df``."""
    domain = field.domain
    idx = domain.multi_index(node)
    if not domain.is_interior(idx):
        raise BoundaryNodeError(f"node {idx} lies on the boundary")
    jet = compute_jet(field, idx)
    lam, V, U = svd_batch(jet.first)
    return ShapeTensor(h=shape_tensor_batch(lam, V, U, jet.second))
