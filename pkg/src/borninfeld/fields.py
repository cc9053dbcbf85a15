"""Uniform box grids in dimension N >= 3, nodal fields with zero boundary trace,
staggered (edge-centred) gradients, norms and (de)serialization.

Nodal arrays have shape ``(n,) * N`` with ``n = points_per_axis``; cell arrays
have shape ``(n - 1,) * N``.  Gradient component ``i`` lives on the edges
parallel to axis ``i`` and has ``n - 1`` entries along that axis.

Every cell carries ``2**N`` one-sided ("corner") gradients: at each corner the
vector whose ``i``-th entry is the difference along the cell edge parallel to
``i`` that touches the corner.  The energy quadrature and the admissibility
constraint are evaluated on corner gradients; their cell mean is the
cell-centred gradient.
"""

import itertools
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConstraintViolation, ValidationError

CONSTRAINT_TOL = 1e-12
FORMAT_VERSION = 1
_MAGIC = b"BIGF"
_HEADER = struct.Struct("<4sIIId")


@dataclass(frozen=True)
class BoxGrid:
    """The box [-extent, extent]^dim sampled with points_per_axis nodes per axis."""

    dim: int
    extent: float
    points_per_axis: int

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 3:
            raise ValidationError(f"dim must be an integer >= 3, got {self.dim}")
        if not self.extent > 0 or not np.isfinite(self.extent):
            raise ValidationError(f"extent must be positive, got {self.extent}")
        n = self.points_per_axis
        if int(n) != n or n < 9 or n % 2 == 0:
            raise ValidationError(f"points_per_axis must be odd and >= 9, got {n}")

    @property
    def spacing(self):
        return 2.0 * self.extent / (self.points_per_axis - 1)

    @property
    def shape(self):
        return (self.points_per_axis,) * self.dim

    @property
    def cell_shape(self):
        return (self.points_per_axis - 1,) * self.dim

    @property
    def cell_volume(self):
        return self.spacing**self.dim

    def axis(self):
        return np.linspace(-self.extent, self.extent, self.points_per_axis)

    def cell_axis(self):
        a = self.axis()
        return 0.5 * (a[1:] + a[:-1])

    def coordinates(self):
        """Sparse (broadcastable) node coordinate arrays, one per axis."""
        return np.meshgrid(*([self.axis()] * self.dim), indexing="ij", sparse=True)

    def cell_coordinates(self):
        return np.meshgrid(*([self.cell_axis()] * self.dim), indexing="ij", sparse=True)

    def node_distance(self, center=None):
        xs = self.coordinates()
        c = np.zeros(self.dim) if center is None else np.asarray(center, float)
        return np.sqrt(sum((x - ci) ** 2 for x, ci in zip(xs, c)))

    def boundary_mask(self):
        n = self.points_per_axis
        mask = np.zeros(self.shape, dtype=bool)
        for i in range(self.dim):
            idx = [slice(None)] * self.dim
            idx[i] = 0
            mask[tuple(idx)] = True
            idx[i] = n - 1
            mask[tuple(idx)] = True
        return mask

    @property
    def interior(self):
        return (slice(1, -1),) * self.dim

    def scaled(self, t):
        return BoxGrid(self.dim, self.extent * t, self.points_per_axis)

    def to_dict(self):
        return {"dim": self.dim, "extent": self.extent,
                "points_per_axis": self.points_per_axis}


def _frozen(a):
    a = np.array(a, dtype=float, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class GridField:
    """Nodal values on a BoxGrid.

    The boundary trace must vanish (the truncated-domain version of decay at
    infinity) unless ``dirichlet`` is set, in which case the boundary values are
    prescribed Dirichlet data.
    """

    grid: BoxGrid
    values: np.ndarray
    dirichlet: bool = False

    def __post_init__(self):
        vals = _frozen(self.values)
        if vals.shape != self.grid.shape:
            raise ValidationError(f"values have shape {vals.shape}, expected {self.grid.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValidationError("field values must be finite")
        if not self.dirichlet and np.any(vals[self.grid.boundary_mask()] != 0.0):
            raise ValidationError("boundary values must be exactly zero")
        object.__setattr__(self, "values", vals)

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def from_function(cls, grid, fn, dirichlet=False):
        """Sample fn(*coords) at the nodes; boundary set to zero unless dirichlet."""
        vals = np.broadcast_to(fn(*grid.coordinates()), grid.shape).astype(float)
        if not dirichlet:
            vals = np.where(grid.boundary_mask(), 0.0, vals)
        return cls(grid, vals, dirichlet=dirichlet)

    def __add__(self, other):
        return GridField(self.grid, self.values + other.values,
                         self.dirichlet or other.dirichlet)

    def __mul__(self, c):
        return GridField(self.grid, c * self.values, self.dirichlet)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class GradientField:
    """Forward differences on edges; component i has n-1 entries along axis i."""

    grid: BoxGrid
    components: tuple = field(repr=False)

    def corners(self):
        """Corner gradients, shape (2**N, N, *cell_shape)."""
        return corner_gradients(self.components, self.grid)

    def cell_average(self):
        """Cell-centred gradient, shape (N, *cell_shape)."""
        N = self.grid.dim
        m = self.grid.points_per_axis - 1
        out = np.zeros((N,) + self.grid.cell_shape)
        for i, comp in enumerate(self.components):
            acc = np.zeros(self.grid.cell_shape)
            others = [j for j in range(N) if j != i]
            for bits in itertools.product((0, 1), repeat=N - 1):
                sl = [slice(None)] * N
                for j, b in zip(others, bits):
                    sl[j] = slice(b, b + m)
                acc += comp[tuple(sl)]
            out[i] = acc / 2 ** (N - 1)
        return out


def corner_offsets(dim):
    return list(itertools.product((0, 1), repeat=dim))


def edge_differences(values, h):
    """Forward differences of a nodal array along every axis."""
    return tuple(np.diff(values, axis=i) / h for i in range(values.ndim))


def corner_gradients(components, grid):
    N = grid.dim
    m = grid.points_per_axis - 1
    offs = corner_offsets(N)
    out = np.empty((len(offs), N) + grid.cell_shape)
    for c, b in enumerate(offs):
        for i in range(N):
            sl = tuple(slice(None) if j == i else slice(b[j], b[j] + m) for j in range(N))
            out[c, i] = components[i][sl]
    return out


def corner_adjoint(flux, grid):
    """Transpose of the map nodal values -> corner gradients.

    For ``flux`` of shape (2**N, N, *cell_shape) returns the nodal array
    ``d/du sum(flux * corner_gradients(u))``.
    """
    N = grid.dim
    m = grid.points_per_axis - 1
    h = grid.spacing
    edges = [np.zeros(tuple(m if j == i else m + 1 for j in range(N))) for i in range(N)]
    for c, b in enumerate(corner_offsets(N)):
        for i in range(N):
            sl = tuple(slice(None) if j == i else slice(b[j], b[j] + m) for j in range(N))
            edges[i][sl] += flux[c, i]
    out = np.zeros(grid.shape)
    for i in range(N):
        hi = tuple(slice(1, None) if j == i else slice(None) for j in range(N))
        lo = tuple(slice(None, -1) if j == i else slice(None) for j in range(N))
        out[hi] += edges[i] / h
        out[lo] -= edges[i] / h
    return out


def gradient(field):
    """Forward differences on edges: (u(x + h e_i) - u(x)) / h."""
    comps = edge_differences(field.values, field.grid.spacing)
    for c in comps:
        c.flags.writeable = False
    return GradientField(field.grid, comps)


def sup_gradient_norm(g):
    """Maximum Euclidean norm of the cell-centred gradient."""
    avg = g.cell_average()
    return float(np.sqrt(np.max(np.sum(avg**2, axis=0))))


def max_corner_gradient_norm(g):
    """Maximum Euclidean norm over all corner gradients (the constrained quantity)."""
    return float(np.sqrt(np.max(np.sum(g.corners() ** 2, axis=1))))


def v_field(g, tol=CONSTRAINT_TOL):
    """Cell-centred v = sqrt(1 - |grad u|^2)."""
    s = np.sum(g.cell_average() ** 2, axis=0)
    worst = float(np.sqrt(np.max(s)))
    if worst > 1.0 + tol:
        raise ConstraintViolation(f"cell gradient norm {worst!r} exceeds 1")
    return np.sqrt(np.clip(1.0 - s, 0.0, 1.0))


def lq_norm(values, grid, q):
    """(sum |f|^q h^N)^(1/q); q = inf gives the max norm."""
    if not q >= 1:
        raise ValidationError(f"q must be >= 1, got {q}")
    a = np.abs(np.asarray(values, dtype=float))
    if np.isinf(q):
        return float(a.max()) if a.size else 0.0
    scale = a.max() if a.size else 0.0
    if scale == 0.0:
        return 0.0
    return float(scale * (np.sum((a / scale) ** q) * grid.cell_volume) ** (1.0 / q))


def hessian_frobenius_sq(values, h):
    """sum_ij u_ij^2 at interior nodes (central second differences); shape (n-2,)*N."""
    N = values.ndim
    core = (slice(1, -1),) * N

    def shifted(shifts):
        return values[tuple(slice(1 + s, values.shape[k] - 1 + s) for k, s in enumerate(shifts))]

    total = np.zeros(values[core].shape)
    centre = values[core]
    for i in range(N):
        e = [0] * N
        e[i] = 1
        plus = shifted(e)
        e[i] = -1
        minus = shifted(e)
        total += ((plus - 2 * centre + minus) / h**2) ** 2
        for j in range(i + 1, N):
            def s(a, b):
                sh = [0] * N
                sh[i], sh[j] = a, b
                return shifted(sh)
            uij = (s(1, 1) - s(1, -1) - s(-1, 1) + s(-1, -1)) / (4 * h * h)
            total += 2 * uij**2
    return total


def w22_seminorm_ball(field, center, radius):
    """(sum over nodes in the ball of sum_ij (D^2 u)_ij^2 h^N)^(1/2)."""
    grid = field.grid
    h = grid.spacing
    c = np.asarray(center, dtype=float)
    lim = grid.extent - 2 * h
    if radius <= 0 or np.any(np.abs(c) + radius > lim + 1e-12 * grid.extent):
        raise ValidationError("ball must lie inside the box interior by at least 2h")
    integrand = hessian_frobenius_sq(field.values, h)
    dist = grid.node_distance(c)[grid.interior]
    mask = dist < radius
    return float(np.sqrt(np.sum(integrand[mask]) * grid.cell_volume))


def field_to_bytes(field):
    """Binary format: header (magic, version, dim, points, extent) + row-major float64."""
    g = field.grid
    return (_HEADER.pack(_MAGIC, FORMAT_VERSION, g.dim, g.points_per_axis, g.extent)
            + np.ascontiguousarray(field.values, dtype="<f8").tobytes(order="C"))


def save_field(field, path):
    with open(path, "wb") as fh:
        fh.write(field_to_bytes(field))


def load_field(path, dirichlet=None):
    with open(path, "rb") as fh:
        raw = fh.read()
    magic, version, dim, n, extent = _HEADER.unpack_from(raw)
    if magic != _MAGIC or version != FORMAT_VERSION:
        raise ValidationError(f"{path}: not a grid field file (version {version})")
    grid = BoxGrid(dim, extent, n)
    vals = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).reshape(grid.shape)
    if dirichlet is None:
        dirichlet = bool(np.any(vals[grid.boundary_mask()] != 0.0))
    return GridField(grid, vals, dirichlet=dirichlet)


def field_to_json(field):
    g = field.grid
    return json.dumps({"format_version": FORMAT_VERSION, "dim": g.dim, "extent": g.extent,
                       "points_per_axis": g.points_per_axis, "dirichlet": field.dirichlet,
                       "values": field.values.ravel().tolist()})


def field_from_json(text):
    d = json.loads(text)
    if d.get("format_version") != FORMAT_VERSION:
        raise ValidationError("unsupported grid field format version")
    grid = BoxGrid(d["dim"], d["extent"], d["points_per_axis"])
    vals = np.array(d["values"], dtype=float).reshape(grid.shape)
    return GridField(grid, vals, dirichlet=d.get("dirichlet", False))
