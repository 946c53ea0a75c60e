"""Box grids, vector-valued fields on them, finite-difference jets, presets.

Nodes are ordered lexicographically by axis (C order of an ``indexing="ij"``
mesh); every reduction over nodes in the package runs in this order.
"""
from dataclasses import dataclass
import csv
import io
import math
import os

import numpy as np

from .errors import (
    BoundaryNodeError,
    ConfigError,
    DimensionError,
    FieldFormatError,
    GridTooCoarseError,
    UnknownPresetError,
)

MIN_RESOLUTION = 5
CSV_FORMAT = "%.17g"


def _as_tuple(value, n, cast):
    if np.ndim(value) == 0:
        return tuple(cast(value) for _ in range(n))
    value = tuple(cast(v) for v in value)
    if len(value) != n:
        raise DimensionError(f"expected {n} entries, got {len(value)}")
    return value


@dataclass(frozen=True)
class GridDomain:
    """Axis-aligned box ``[lower, upper]`` sampled by a uniform node grid."""

    n: int
    lower: tuple
    upper: tuple
    resolution: tuple

    def __post_init__(self):
        if self.n not in (2, 3):
            raise DimensionError(f"domain dimension must be 2 or 3, got {self.n}")
        object.__setattr__(self, "lower", _as_tuple(self.lower, self.n, float))
        object.__setattr__(self, "upper", _as_tuple(self.upper, self.n, float))
        object.__setattr__(self, "resolution", _as_tuple(self.resolution, self.n, int))
        if min(self.resolution) < MIN_RESOLUTION:
            raise GridTooCoarseError(
                f"resolution too coarse: {self.resolution} (need >= {MIN_RESOLUTION} nodes per axis)"
            )
        for lo, hi in zip(self.lower, self.upper):
            if not (math.isfinite(lo) and math.isfinite(hi) and hi > lo):
                raise DimensionError(f"invalid box extent [{lo}, {hi}]")

    @classmethod
    def box(cls, n=2, lower=-1.0, upper=1.0, resolution=33):
        return cls(n=n, lower=lower, upper=upper, resolution=resolution)

    @property
    def shape(self):
        return self.resolution

    @property
    def spacing(self):
        return tuple((hi - lo) / (r - 1) for lo, hi, r in zip(self.lower, self.upper, self.resolution))

    @property
    def h(self):
        """Smallest grid spacing."""
        return min(self.spacing)

    @property
    def cell_volume(self):
        return math.prod(self.spacing)

    @property
    def node_count(self):
        return math.prod(self.resolution)

    def axes(self):
        return [np.linspace(lo, hi, r) for lo, hi, r in zip(self.lower, self.upper, self.resolution)]

    def coords(self):
        """Coordinate arrays, one per axis, each of shape ``self.shape``."""
        return np.meshgrid(*self.axes(), indexing="ij")

    def points(self):
        """Node coordinates, shape ``(node_count, n)``, lexicographic order."""
        return np.stack([c.ravel() for c in self.coords()], axis=1)

    @property
    def interior(self):
        """Slice tuple selecting the interior block of a node array."""
        return tuple(slice(1, -1) for _ in range(self.n))

    @property
    def interior_shape(self):
        return tuple(r - 2 for r in self.resolution)

    def boundary_mask(self):
        mask = np.ones(self.shape, dtype=bool)
        mask[self.interior] = False
        return mask

    def interior_mask(self):
        return ~self.boundary_mask()

    def multi_index(self, node):
        if np.ndim(node) == 0:
            return tuple(int(i) for i in np.unravel_index(int(node), self.shape))
        return tuple(int(i) for i in node)

    def flat_index(self, idx):
        return int(np.ravel_multi_index(tuple(idx), self.shape))

    def is_interior(self, node):
        idx = self.multi_index(node)
        return all(0 < i < r - 1 for i, r in zip(idx, self.resolution))

    def distance_to_boundary(self):
        """Euclidean distance from each node to the box boundary."""
        dist = np.full(self.shape, np.inf)
        for c, lo, hi in zip(self.coords(), self.lower, self.upper):
            dist = np.minimum(dist, np.minimum(c - lo, hi - c))
        return np.maximum(dist, 0.0)

    def collar_mask(self, layers=2):
        """Nodes closer than ``layers`` grid steps to the boundary (boundary included)."""
        mask = np.ones(self.shape, dtype=bool)
        mask[tuple(slice(layers, -layers) for _ in range(self.n))] = False
        return mask


@dataclass(frozen=True, eq=False)
class VectorField:
    """Grid samples of a map ``f: D -> R^m``.

    ``values`` has shape ``domain.shape + (m,)`` and is stored read-only.
    """

    domain: GridDomain
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.ndim == self.domain.n:
            vals = vals[..., None]
        if vals.shape[:-1] != self.domain.shape or vals.ndim != self.domain.n + 1:
            raise DimensionError(f"values shape {vals.shape} does not match domain {self.domain.shape}")
        if not 1 <= vals.shape[-1] <= 4:
            raise DimensionError(f"codimension must be 1..4, got {vals.shape[-1]}")
        if not np.all(np.isfinite(vals)):
            raise DimensionError("field values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def m(self):
        return self.values.shape[-1]

    @property
    def n(self):
        return self.domain.n

    @property
    def flat(self):
        """Values indexed ``(node, alpha)``."""
        return self.values.reshape(-1, self.m)

    def replace(self, values):
        return VectorField(self.domain, values)

    def permuted(self, order):
        """Relabel target components: component ``a`` of the result is ``order[a]``."""
        return VectorField(self.domain, self.values[..., list(order)])


@dataclass(frozen=True, eq=False)
class BoundaryData:
    """Dirichlet values of ``phi`` on the boundary nodes, in node order."""

    domain: GridDomain
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        count = int(self.domain.boundary_mask().sum())
        if vals.ndim != 2 or vals.shape[0] != count:
            raise DimensionError(f"boundary data must have shape ({count}, m), got {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise DimensionError("boundary values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_field(cls, field):
        return cls(field.domain, field.values[field.domain.boundary_mask()])

    @property
    def m(self):
        return self.values.shape[1]

    def scaled(self, s):
        return BoundaryData(self.domain, s * self.values)

    def apply(self, values):
        """Return a copy of the node array ``values`` with this boundary imposed."""
        out = np.array(values, dtype=np.result_type(values, float), copy=True)
        out[self.domain.boundary_mask()] = self.values
        return out

    def matches(self, field):
        return bool(np.array_equal(field.values[self.domain.boundary_mask()], self.values))


@dataclass(frozen=True)
class JetSample:
    value: np.ndarray
    first: np.ndarray
    second: np.ndarray


def _shifted(values, offset):
    """Interior block of ``values`` translated by the integer vector ``offset``."""
    sl = []
    for o, r in zip(offset, values.shape):
        sl.append(slice(1 + o, r - 1 + o))
    return values[tuple(sl)]


def jets(values, domain):
    """Central-difference jets on the whole interior block.

    Parameters
    ----------
    values : ndarray, shape ``domain.shape + (m,)``
        Real or complex node values.
    domain : GridDomain

    Returns
    -------
    first : ndarray, shape ``interior_shape + (m, n)``
    second : ndarray, shape ``interior_shape + (m, n, n)``
    """
    n = domain.n
    h = domain.spacing
    m = values.shape[-1]
    shape = domain.interior_shape
    first = np.zeros(shape + (m, n), dtype=values.dtype)
    second = np.zeros(shape + (m, n, n), dtype=values.dtype)
    center = _shifted(values, (0,) * n)
    unit = np.eye(n, dtype=int)
    for k in range(n):
        fp = _shifted(values, unit[k])
        fm = _shifted(values, -unit[k])
        first[..., k] = (fp - fm) / (2.0 * h[k])
        second[..., k, k] = (fp - 2.0 * center + fm) / (h[k] * h[k])
        for l in range(k + 1, n):
            fpp = _shifted(values, unit[k] + unit[l])
            fpm = _shifted(values, unit[k] - unit[l])
            fmp = _shifted(values, -unit[k] + unit[l])
            fmm = _shifted(values, -unit[k] - unit[l])
            mixed = (fpp - fpm - fmp + fmm) / (4.0 * h[k] * h[l])
            second[..., k, l] = mixed
            second[..., l, k] = mixed
    return first, second


def compute_jet(field, node):
    """Value, gradient and Hessian of ``field`` at one interior node."""
    domain = field.domain
    idx = domain.multi_index(node)
    if len(idx) != domain.n or any(not 0 <= i < r for i, r in zip(idx, domain.shape)):
        raise BoundaryNodeError(f"node {idx} is outside the grid")
    if not domain.is_interior(idx):
        raise BoundaryNodeError(f"node {idx} lies on the boundary; jets are interior-only")
    patch = np.asarray(field.values[tuple(slice(i - 1, i + 2) for i in idx)])
    # a 3^n patch is the smallest grid whose interior block is the node itself
    first, second = jets(patch, _PatchDomain(domain.n, domain.spacing))
    mid = (0,) * domain.n
    return JetSample(value=patch[(1,) * domain.n].copy(), first=first[mid], second=second[mid])


@dataclass(frozen=True)
class _PatchDomain:
    n: int
    spacing: tuple

    @property
    def interior_shape(self):
        return (1,) * self.n


# ----------------------------------------------------------------------------
# presets


def _scherk(domain, params):
    if domain.n != 2:
        raise ConfigError("scherk needs n = 2")
    x, y = domain.coords()
    if max(map(abs, domain.lower + domain.upper)) >= math.pi / 2:
        raise ConfigError("scherk needs the box inside |x|, |y| < pi/2")
    return np.log(np.cos(x) / np.cos(y))[..., None]


def _holomorphic_quadratic(domain, params):
    if domain.n != 2:
        raise ConfigError("holomorphic_quadratic needs n = 2")
    c = float(params.get("c", 0.3))
    x, y = domain.coords()
    return np.stack([c * (x * x - y * y), 2.0 * c * x * y], axis=-1)


def _linear(domain, params):
    A = np.atleast_2d(np.asarray(params.get("A", np.zeros((1, domain.n))), dtype=float))
    if A.shape[1] != domain.n:
        raise ConfigError(f"linear preset: A must have {domain.n} columns, got shape {A.shape}")
    b = np.asarray(params.get("b", np.zeros(A.shape[0])), dtype=float)
    X = np.stack(domain.coords(), axis=-1)
    return X @ A.T + b


def _zero(domain, params):
    m = int(params.get("m", 1))
    return np.zeros(domain.shape + (m,))


def _bump(domain, params):
    m = int(params.get("m", 1))
    amp = np.broadcast_to(np.asarray(params.get("amp", 0.5), dtype=float), (m,))
    prof = np.ones(domain.shape)
    for c, lo, hi in zip(domain.coords(), domain.lower, domain.upper):
        prof = prof * np.sin(math.pi * (c - lo) / (hi - lo))
    prof[domain.boundary_mask()] = 0.0
    return prof[..., None] * amp


def _trig(domain, params):
    m = int(params.get("m", 1))
    amp = float(params.get("amp", 0.2))
    freq = float(params.get("freq", 1.0))
    X = domain.coords()
    out = []
    for a in range(m):
        phase = a * math.pi / (2 * m)
        comp = amp * np.sin(freq * X[0] + phase)
        for c in X[1:]:
            comp = comp * np.cos(freq * c)
        out.append(comp)
    return np.stack(out, axis=-1)


def _random_lipschitz(domain, params):
    if "seed" not in params:
        raise ConfigError("random_lipschitz needs an integer 'seed'")
    rng = np.random.default_rng(int(params["seed"]))
    m = int(params.get("m", 1))
    lip = float(params.get("lip", 0.5))
    modes = int(params.get("modes", 4))
    X = np.stack(domain.coords(), axis=-1)
    out = np.zeros(domain.shape + (m,))
    for a in range(m):
        w = rng.normal(size=(modes, domain.n)) * 2.0
        amp = rng.normal(size=modes)
        phase = rng.uniform(0.0, 2.0 * math.pi, size=modes)
        # sum |a_k| |w_k| bounds the gradient norm of the component
        amp = amp * lip / np.sum(np.abs(amp) * np.linalg.norm(w, axis=1))
        out[..., a] = np.sin(X @ w.T + phase) @ amp
    return out


def _scaled(domain, params):
    base = params.get("base")
    if base is None:
        raise ConfigError("scaled preset needs a 'base' preset name")
    inner = sample_preset(base, params.get("params", {}), domain)
    return float(params.get("s", 1.0)) * inner.values + np.asarray(params.get("offset", 0.0), dtype=float)


_PRESETS = {
    "zero": (_zero, {"m"}),
    "linear": (_linear, {"A", "b"}),
    "bump": (_bump, {"m", "amp"}),
    "scherk": (_scherk, set()),
    "holomorphic_quadratic": (_holomorphic_quadratic, {"c"}),
    "trig": (_trig, {"m", "amp", "freq"}),
    "random_lipschitz": (_random_lipschitz, {"seed", "m", "lip", "modes"}),
    "scaled": (_scaled, {"base", "s", "offset", "params"}),
}

PRESET_NAMES = tuple(_PRESETS)


def sample_preset(name, params=None, domain=None):
    """Sample a built-in closed-form map on ``domain``."""
    params = dict(params or {})
    if name not in _PRESETS:
        raise UnknownPresetError(f"unknown preset {name!r}; choose from {', '.join(PRESET_NAMES)}")
    fn, allowed = _PRESETS[name]
    extra = set(params) - allowed
    if extra:
        raise ConfigError(f"preset {name!r} does not take parameters {sorted(extra)}")
    if domain is None:
        raise ConfigError("sample_preset needs a domain")
    return VectorField(domain, fn(domain, params))


def preset_is_solution(name, params=None):
    """True when the preset is an exact solution of the minimal surface system."""
    params = params or {}
    if name in ("zero", "linear", "scherk", "holomorphic_quadratic"):
        return True
    if name == "scaled":
        base = params.get("base")
        s = float(params.get("s", 1.0))
        if base in ("zero", "linear", "holomorphic_quadratic"):
            return True
        if base == "scherk":
            return s in (1.0, -1.0)
    return False


# ----------------------------------------------------------------------------
# CSV dump/restore


def atomic_write_text(path, text):
    """Write ``text`` to a temporary sibling file, then rename it over ``path``."""
    path = os.fspath(path)
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def field_to_csv(field, extra=None):
    """Render ``field`` (plus optional per-node columns) as CSV text."""
    extra = dict(extra or {})
    n, m = field.n, field.m
    header = [f"x{k + 1}" for k in range(n)] + [f"f{a + 1}" for a in range(m)] + list(extra)
    cols = [field.domain.points(), field.flat]
    for name, arr in extra.items():
        arr = np.asarray(arr, dtype=float).reshape(field.domain.node_count, -1)
        if arr.shape[1] != 1:
            raise DimensionError(f"extra column {name!r} must have one value per node")
        cols.append(arr)
    table = np.hstack(cols)
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    np.savetxt(buf, table, fmt=CSV_FORMAT, delimiter=",")
    return buf.getvalue()


def write_field_csv(path, field, extra=None):
    atomic_write_text(path, field_to_csv(field, extra))


def read_field_csv(path):
    """Restore a field written by :func:`write_field_csv`.

    Extra columns are ignored.  Raises :class:`FieldFormatError` when the file
    is not a complete, lexicographically ordered box grid.
    """
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise FieldFormatError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise FieldFormatError("empty CSV")
    header = [h.strip() for h in rows[0]]
    xcols = [i for i, h in enumerate(header) if h.startswith("x") and h[1:].isdigit()]
    fcols = [i for i, h in enumerate(header) if h.startswith("f") and h[1:].isdigit()]
    n, m = len(xcols), len(fcols)
    if [header[i] for i in xcols] != [f"x{k + 1}" for k in range(n)] or [header[i] for i in fcols] != [
        f"f{a + 1}" for a in range(m)
    ]:
        raise FieldFormatError(f"header must contain x1..xn and f1..fm columns, got {header}")
    if n not in (2, 3) or m < 1:
        raise FieldFormatError(f"unsupported dimensions n={n}, m={m}")
    try:
        data = np.array([[float(r[i]) for i in xcols + fcols] for r in rows[1:] if r], dtype=float)
    except (ValueError, IndexError) as exc:
        raise FieldFormatError(f"malformed numeric row: {exc}") from exc
    if data.ndim != 2 or data.shape[0] == 0 or not np.all(np.isfinite(data)):
        raise FieldFormatError("CSV has no rows or non-finite values")
    pts = data[:, :n]
    axes = [np.unique(pts[:, k]) for k in range(n)]
    res = tuple(len(a) for a in axes)
    try:
        domain = GridDomain(n, tuple(a[0] for a in axes), tuple(a[-1] for a in axes), res)
    except (DimensionError, GridTooCoarseError) as exc:
        raise FieldFormatError(f"CSV does not describe a usable grid: {exc}") from exc
    if data.shape[0] != domain.node_count or not np.array_equal(pts, domain.points()):
        raise FieldFormatError("CSV nodes are not a complete lexicographic box grid")
    return VectorField(domain, data[:, n:].reshape(domain.shape + (m,)))
