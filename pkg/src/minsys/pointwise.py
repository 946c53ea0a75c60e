"""Pointwise geometry of the graph of a linear map.

Everything here is a pure function of a single Jacobian ``J`` (an ``m x n``
array with ``J[a, i] = d f^a / d x^i``) or of a stack of them with shape
``(..., m, n)``.  The batched forms are what the grid code uses; the scalar
forms wrap them and return small frozen dataclasses.

Conventions
-----------
* Singular values are sorted in descending order and only the first
  ``p = min(n, m)`` are reported.
* Bases are stored row-wise: ``right_basis[i]`` is ``v_i`` and
  ``left_basis[a]`` is ``u_a``.
* The first component of each right singular vector whose magnitude exceeds
  ``SIGN_THRESHOLD`` is positive; left vectors follow so that
  ``J v_i = lambda_i u_i``.
"""
from dataclasses import dataclass
import math

import numpy as np

from .errors import DimensionError

MAX_DIM = 4
JACOBI_TOL = 1e-14
MAX_SWEEPS = 60
SIGN_THRESHOLD = 1e-12

__all__ = [
    "SingularDecomposition",
    "MetricData",
    "GrassmannPoint",
    "AdaptedFrames",
    "ShapeTensor",
    "as_jacobian",
    "svd",
    "svd_batch",
    "op_norm",
    "wedge2_norm",
    "metric",
    "metric_batch",
    "grassmann_forms",
    "grassmann_forms_batch",
    "adapted_frames",
    "adapted_frames_batch",
    "shape_tensor",
    "shape_tensor_batch",
    "identity_rhs",
]


@dataclass(frozen=True)
class SingularDecomposition:
    lambdas: np.ndarray
    right_basis: np.ndarray
    left_basis: np.ndarray

    @property
    def rank_cap(self):
        return len(self.lambdas)


@dataclass(frozen=True)
class MetricData:
    """Induced metric ``g = I + J^T J`` of a graph and derived quantities."""

    g: np.ndarray
    g_inv: np.ndarray
    sqrt_g: float
    star_omega: float


@dataclass(frozen=True)
class GrassmannPoint:
    """Values of the two self-dual/anti-self-dual 2-forms on a graph 2-plane."""

    omega1: float
    omega2: float


@dataclass(frozen=True)
class AdaptedFrames:
    tangent: np.ndarray
    normal: np.ndarray


@dataclass(frozen=True)
class ShapeTensor:
    """Second fundamental form coefficients ``h[a, i, j]`` in adapted frames."""

    h: np.ndarray

    @property
    def norm2(self):
        return float(np.sum(self.h ** 2))


def as_jacobian(J):
    """Validate a single Jacobian and return it as a float array."""
    J = np.asarray(J, dtype=float)
    if J.ndim != 2:
        raise DimensionError(f"a Jacobian must be a 2-d array, got shape {J.shape}")
    m, n = J.shape
    if not (1 <= m <= MAX_DIM and 1 <= n <= MAX_DIM):
        raise DimensionError(f"Jacobian shape {J.shape} outside 1..{MAX_DIM} x 1..{MAX_DIM}")
    if not np.all(np.isfinite(J)):
        raise DimensionError("Jacobian has non-finite entries")
    return J


def _orthonormal_completion(U, filled):
    """Fill the columns of ``U`` (shape (B, m, m)) where ``filled`` is False.

    Candidates are the standard basis vectors, Gram-Schmidt'ed (twice) against
    the columns already present; the candidate with the largest remainder wins.
    """
    B, m, _ = U.shape
    filled = filled.copy()
    eye = np.eye(m)
    for col in range(m):
        need = ~filled[:, col]
        if not np.any(need):
            continue
        idx = np.nonzero(need)[0]
        Ub = U[idx]
        fb = filled[idx]
        cands = np.broadcast_to(eye, (len(idx), m, m)).copy()
        for _ in range(2):
            Q = Ub * fb[:, None, :]
            cands = cands - Q @ (np.swapaxes(Q, 1, 2) @ cands)
        norms = np.linalg.norm(cands, axis=1)
        best = np.argmax(norms, axis=1)
        vec = cands[np.arange(len(idx)), :, best]
        vec = vec / norms[np.arange(len(idx)), best][:, None]
        Ub[:, :, col] = vec
        U[idx] = Ub
        filled[idx, col] = True
    return U


def _jacobi_columns(A):
    """Orthogonalize the columns of ``A`` (shape (B, r, c)) by plane rotations.

    Returns the rotated columns and the accumulated orthogonal matrix whose
    columns are the right singular vectors of ``A``.
    """
    B, _, c = A.shape
    W = np.broadcast_to(np.eye(c), (B, c, c)).copy()
    floor = np.finfo(float).eps ** 2
    pairs = [(i, j) for i in range(c) for j in range(i + 1, c)]
    for _ in range(MAX_SWEEPS):
        rotated = False
        for i, j in pairs:
            ai = A[:, :, i]
            aj = A[:, :, j]
            alpha = np.einsum("bk,bk->b", ai, ai)
            beta = np.einsum("bk,bk->b", aj, aj)
            gamma = np.einsum("bk,bk->b", ai, aj)
            active = (np.abs(gamma) > JACOBI_TOL * np.sqrt(alpha * beta)) & (
                np.minimum(alpha, beta) > floor * np.maximum(alpha, beta)
            )
            if not np.any(active):
                continue
            rotated = True
            g = np.where(active, gamma, 1.0)
            zeta = (beta - alpha) / (2.0 * g)
            t = np.copysign(1.0, zeta) / (np.abs(zeta) + np.hypot(1.0, zeta))
            cs = 1.0 / np.sqrt(1.0 + t * t)
            sn = cs * t
            cs = np.where(active, cs, 1.0)[:, None]
            sn = np.where(active, sn, 0.0)[:, None]
            A[:, :, i], A[:, :, j] = cs * ai - sn * aj, sn * ai + cs * aj
            wi = W[:, :, i].copy()
            wj = W[:, :, j]
            W[:, :, i], W[:, :, j] = cs * wi - sn * wj, sn * wi + cs * wj
        if not rotated:
            break
    sigma = np.linalg.norm(A, axis=1)
    order = np.argsort(-sigma, axis=1, kind="stable")
    sigma = np.take_along_axis(sigma, order, axis=1)
    A = np.take_along_axis(A, order[:, None, :], axis=2)
    W = np.take_along_axis(W, order[:, None, :], axis=2)
    return sigma, A, W


def _normalized_columns(A, sigma, size):
    """Columns ``A[:, :, k] / sigma_k`` completed to an orthonormal basis of R^size."""
    B, _, c = A.shape
    p = min(c, size)
    Q = np.zeros((B, size, size))
    scale = np.maximum(sigma[:, :1], np.finfo(float).tiny)
    good = sigma[:, :p] > max(A.shape[1], c) * np.finfo(float).eps * scale
    safe = np.where(good, sigma[:, :p], 1.0)
    Q[:, :, :p] = np.where(good[:, None, :], A[:, :, :p] / safe[:, None, :], 0.0)
    filled = np.zeros((B, size), dtype=bool)
    filled[:, :p] = good
    if not np.all(filled):
        Q = _orthonormal_completion(Q, filled)
    return Q


def svd_batch(J):
    """Singular value decomposition of a stack of small matrices.

    One-sided Jacobi on the columns of ``J`` (or of ``J^T`` when ``n > m``):
    pairs of columns are rotated until every off-diagonal entry of the column
    Gram matrix is below ``JACOBI_TOL`` times the geometric mean of the
    corresponding diagonal entries.

    Parameters
    ----------
    J : array_like, shape (..., m, n)

    Returns
    -------
    lambdas : ndarray, shape (..., min(m, n))
        Singular values, descending.
    V : ndarray, shape (..., n, n)
        Right singular vectors as rows.
    U : ndarray, shape (..., m, m)
        Left singular vectors as rows.
    """
    J = np.asarray(J, dtype=float)
    if J.ndim < 2:
        raise DimensionError("expected an array of shape (..., m, n)")
    *batch, m, n = J.shape
    p = min(m, n)
    A = J.reshape(-1, m, n)
    # power-of-two rescaling is exact and keeps squared norms away from under/overflow
    peak = np.max(np.abs(A), axis=(1, 2)) if A.size else np.zeros(A.shape[0])
    expo = np.where(peak > 0, np.frexp(np.where(peak > 0, peak, 1.0))[1], 0)
    A = np.ldexp(A, -expo[:, None, None])
    if n <= m:
        sigma, R, V = _jacobi_columns(A.copy())
        U = _normalized_columns(R, sigma, m)
    else:
        sigma, R, U = _jacobi_columns(np.swapaxes(A, 1, 2).copy())
        V = _normalized_columns(R, sigma, n)

    # sign convention on the right vectors; left vectors follow
    big = np.abs(V) > SIGN_THRESHOLD
    first = np.argmax(big, axis=1)
    lead = np.take_along_axis(V, first[:, None, :], axis=1)[:, 0, :]
    flip = np.where(lead < 0, -1.0, 1.0)
    V = V * flip[:, None, :]
    U[:, :, :p] = U[:, :, :p] * flip[:, None, :p]

    lambdas = np.ldexp(sigma[:, :p], expo[:, None]).reshape(*batch, p)
    V = np.swapaxes(V, 1, 2).reshape(*batch, n, n)
    U = np.swapaxes(U, 1, 2).reshape(*batch, m, m)
    return lambdas, V, U


def svd(J):
    """Singular decomposition of one Jacobian.

    >>> svd(np.diag([2.0, 3.0])).lambdas
    array([3., 2.])
    """
    J = as_jacobian(J)
    lam, V, U = svd_batch(J)
    return SingularDecomposition(lambdas=lam, right_basis=V, left_basis=U)


def _lambdas(J):
    J = np.asarray(J, dtype=float)
    return svd_batch(J)[0]


def op_norm(J):
    """Operator norm ``sup_{|v|=1} |J v|``, the largest singular value."""
    lam = _lambdas(J)
    out = lam[..., 0]
    return float(out) if out.ndim == 0 else out


def wedge2_norm(J):
    """Norm of the induced map on 2-vectors: the product of the two largest
    singular values, zero when ``min(n, m) == 1``."""
    lam = _lambdas(J)
    if lam.shape[-1] < 2:
        out = np.zeros(lam.shape[:-1])
    else:
        out = lam[..., 0] * lam[..., 1]
    return float(out) if np.ndim(out) == 0 else out


def metric_batch(J):
    """Return ``(g, g_inv, sqrt_g, star_omega)`` for a stack of Jacobians."""
    J = np.asarray(J, dtype=float)
    n = J.shape[-1]
    g = np.eye(n) + np.swapaxes(J, -1, -2) @ J
    L = np.linalg.cholesky(g)
    sqrt_g = np.prod(np.diagonal(L, axis1=-2, axis2=-1), axis=-1)
    g_inv = np.linalg.inv(g)
    return g, g_inv, sqrt_g, 1.0 / sqrt_g


def metric(J):
    J = as_jacobian(J)
    g, g_inv, sqrt_g, star = metric_batch(J)
    return MetricData(g=g, g_inv=g_inv, sqrt_g=float(sqrt_g), star_omega=float(star))


def grassmann_forms_batch(J, oriented=False):
    """Evaluate ``omega1``, ``omega2`` on the tangent planes of graphs.

    The plane of the graph of ``J`` is spanned by ``(e_k, J e_k)``; on that
    frame ``dx1^dx2 = 1`` and ``dy1^dy2 = det J`` while the frame's 2-volume
    is ``sqrt(det g)``.

    By default the target orientation is chosen so that ``det J >= 0``, which
    gives ``omega1 = (1 - l1 l2) / (sqrt(2) sqrt(det g))`` and
    ``omega2 = (1 + l1 l2) / (sqrt(2) sqrt(det g))``; then ``omega1 > 0``
    exactly when ``l1 l2 < 1``.  With ``oriented=True`` the forms are
    evaluated with the fixed orientation of ``R^4`` and ``det J`` keeps its
    sign, so for ``det J < 0`` the roles of the two forms swap.
    """
    J = np.asarray(J, dtype=float)
    if J.shape[-2:] != (2, 2):
        raise DimensionError(f"Grassmann forms need n = m = 2, got {J.shape[-2:]}")
    d = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    if not oriented:
        d = np.abs(d)
    sqrt_g = metric_batch(J)[2]
    denom = math.sqrt(2.0) * sqrt_g
    return (1.0 - d) / denom, (1.0 + d) / denom


def grassmann_forms(J, oriented=False):
    J = as_jacobian(J)
    w1, w2 = grassmann_forms_batch(J, oriented)
    return GrassmannPoint(omega1=float(w1), omega2=float(w2))


def _frame_weights(lambdas, size):
    """Singular values padded with zeros to ``size`` entries."""
    pad = size - lambdas.shape[-1]
    if pad > 0:
        lambdas = np.concatenate([lambdas, np.zeros(lambdas.shape[:-1] + (pad,))], axis=-1)
    return lambdas[..., :size]


def adapted_frames_batch(lambdas, V, U):
    """Tangent and normal frames of the graph in ``R^{n+m}`` (vectors as rows)."""
    n = V.shape[-1]
    m = U.shape[-1]
    lt = _frame_weights(lambdas, n)
    ln = _frame_weights(lambdas, m)
    # J v_i = lambda_i u_i only pairs indices below min(n, m)
    Upad = np.zeros(V.shape[:-2] + (n, m))
    k = min(n, m)
    Upad[..., :k, :] = U[..., :k, :]
    Vpad = np.zeros(U.shape[:-2] + (m, n))
    Vpad[..., :k, :] = V[..., :k, :]
    st = np.hypot(1.0, lt)[..., None]
    sn = np.hypot(1.0, ln)[..., None]
    tangent = np.concatenate([V, lt[..., None] * Upad], axis=-1) / st
    normal = np.concatenate([-ln[..., None] * Vpad, U], axis=-1) / sn
    return tangent, normal


def adapted_frames(J):
    """Orthonormal frames adapted to the singular decomposition of ``J``.

    ``E_i = (v_i, lambda_i u_i) / sqrt(1 + lambda_i^2)`` and
    ``N_a = (-lambda_a v_a, u_a) / sqrt(1 + lambda_a^2)``, with
    ``lambda = 0`` beyond ``min(n, m)``.
    """
    dec = svd(J)
    t, nrm = adapted_frames_batch(dec.lambdas, dec.right_basis, dec.left_basis)
    return AdaptedFrames(tangent=t, normal=nrm)


def shape_tensor_batch(lambdas, V, U, hessian):
    """Second fundamental form in adapted frames.

    Parameters
    ----------
    lambdas, V, U : arrays from :func:`svd_batch`
    hessian : ndarray, shape (..., m, n, n)
        ``hessian[a, k, l] = d^2 f^a / dx^k dx^l``.

    Returns
    -------
    ndarray, shape (..., m, n, n)
        ``h[a, i, j] = <A(E_i, E_j), N_a>``.
    """
    n = V.shape[-1]
    m = U.shape[-1]
    lt = _frame_weights(lambdas, n)
    ln = _frame_weights(lambdas, m)
    # project the Hessian onto u_a, then pull both tangent slots back through v_i
    proj = np.einsum("...ab,...bkl->...akl", U, hessian)
    h = np.einsum("...ik,...jl,...akl->...aij", V, V, proj)
    h = h / np.sqrt(1.0 + ln ** 2)[..., :, None, None]
    wt = 1.0 / np.sqrt(1.0 + lt ** 2)
    h = h * wt[..., None, :, None] * wt[..., None, None, :]
    return 0.5 * (h + np.swapaxes(h, -1, -2))


def shape_tensor(J, hessian):
    J = as_jacobian(J)
    hessian = np.asarray(hessian, dtype=float)
    m, n = J.shape
    if hessian.shape != (m, n, n):
        raise DimensionError(f"Hessian must have shape {(m, n, n)}, got {hessian.shape}")
    lam, V, U = svd_batch(J)
    return ShapeTensor(h=shape_tensor_batch(lam, V, U, hessian))


def identity_rhs(lambdas, h):
    """Right-hand side of the Laplacian identity for ``ln *Omega``.

    ``-sum h[a,l,k]^2 - sum_{i,j,k} lambda_i lambda_j h[i,j,k] h[j,i,k]`` with
    ``i, j`` running over ``min(n, m)`` paired indices.  Accepts stacks.
    """
    lambdas = np.asarray(lambdas, dtype=float)
    h = np.asarray(h.h if isinstance(h, ShapeTensor) else h, dtype=float)
    m, n = h.shape[-3], h.shape[-2]
    p = min(n, m, lambdas.shape[-1])
    full = np.sum(h ** 2, axis=(-3, -2, -1))
    hp = h[..., :p, :p, :]
    lam = lambdas[..., :p]
    cross = np.einsum("...i,...j,...ijk,...jik->...", lam, lam, hp, hp)
    out = -full - cross
    return float(out) if np.ndim(out) == 0 else out
