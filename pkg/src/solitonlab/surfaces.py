"""Discrete hypersurfaces: catalog members, graph patches, truncation, refinement, JSON.

A :class:`SampledHypersurface` is a set of samples (position, unit normal,
area weight) taken from a structured chart.  Two chart kinds exist:

* :class:`GridChart` -- an ``n``-dimensional parameter grid.  The chart keeps
  every grid node (positions, normals, weights) so that stencils near a cut
  can see inactive neighbours; the surface records which nodes it owns.
* :class:`ProfileChart` -- a rotationally symmetric hypersurface about the
  ``x_{n+1}`` axis.  Each sample stands for a whole orbit ``S^{n-1}``; its
  position is the representative point in the ``(x_1, x_{n+1})`` half-plane
  and its weight is the area of the orbit band.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from typing import Callable, Optional, Sequence, Union

import numpy as np

NORMAL_TOL = 1e-12
MIN_AXIS = 5


class SurfaceError(ValueError):
    """Invalid surface construction, invariant violation or schema error."""


# ---------------------------------------------------------------------------
# catalog ids
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Hyperplane:
    normal: tuple
    offset: float = 0.0

    @property
    def n(self):
        return len(self.normal) - 1


@dataclass(frozen=True)
class Sphere:
    n: int

    @property
    def radius(self):
        return math.sqrt(2.0 * self.n)


@dataclass(frozen=True)
class Cylinder:
    k: int
    n: int

    @property
    def radius(self):
        return math.sqrt(2.0 * self.k)


@dataclass(frozen=True)
class TiltedPlaneGraph:
    v: tuple

    @property
    def n(self):
        return len(self.v) - 1


@dataclass(frozen=True)
class Bowl:
    n: int


CatalogId = Union[Hyperplane, Sphere, Cylinder, TiltedPlaneGraph, Bowl]

_CATALOG_TYPES = {c.__name__: c for c in (Hyperplane, Sphere, Cylinder, TiltedPlaneGraph, Bowl)}


def catalog_to_dict(cid):
    d = {"type": type(cid).__name__}
    for k, v in asdict(cid).items():
        d[k] = list(v) if isinstance(v, tuple) else v
    return d


def catalog_from_dict(d):
    d = dict(d)
    cls = _CATALOG_TYPES[d.pop("type")]
    for k, v in list(d.items()):
        if isinstance(v, list):
            d[k] = tuple(v)
    return cls(**d)


def catalog_label(cid):
    if isinstance(cid, Sphere):
        return f"sphere(n={cid.n})"
    if isinstance(cid, Cylinder):
        return f"cylinder(k={cid.k},n={cid.n})"
    if isinstance(cid, Hyperplane):
        return f"hyperplane(n={cid.n})"
    if isinstance(cid, TiltedPlaneGraph):
        return f"tilted_plane_graph(n={cid.n})"
    return f"bowl(n={cid.n})"


# ---------------------------------------------------------------------------
# charts
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class GridChart:
    shape: tuple
    spacing: tuple
    origin: tuple
    axes: tuple
    grid_x: np.ndarray
    grid_nu: np.ndarray
    grid_dmu: np.ndarray
    pole_partner: Optional[int] = None
    analytic: Optional[dict] = None
    graph: Optional[dict] = None
    height_fn: Optional[Callable] = field(default=None, repr=False)

    kind = "grid"

    @property
    def dim(self):
        return len(self.shape)

    @property
    def size(self):
        return int(np.prod(self.shape))

    @property
    def h(self):
        """Largest metric cell length (a proxy for the discretisation scale)."""
        d1 = [np.linalg.norm(np.gradient(self.grid_x, axis=i), axis=-1) for i in range(self.dim)]
        return float(max(np.max(d) for d in d1))

    def params(self, axis):
        return self.origin[axis] + self.spacing[axis] * np.arange(self.shape[axis])

    def scatter(self, index, values, fill=np.nan):
        values = np.asarray(values, dtype=float)
        out = np.full((self.size,) + values.shape[1:], fill, dtype=float)
        out[index] = values
        return out.reshape(tuple(self.shape) + values.shape[1:])

    def gather(self, index, grid):
        grid = np.asarray(grid)
        return grid.reshape((self.size,) + grid.shape[self.dim:])[index]

    def to_dict(self, index):
        d = {
            "kind": "grid",
            "shape": list(self.shape),
            "spacing": list(self.spacing),
            "origin": list(self.origin),
            "axes": list(self.axes),
            "pole_partner": self.pole_partner,
            "analytic": _jsonable(self.analytic),
        }
        if self.graph is not None:
            g = self.graph
            d["graph"] = {"v": list(map(float, g["v"])), "basis": np.asarray(g["basis"]).tolist(),
                          "heights": np.asarray(g["heights"]).tolist()}
        if len(index) != self.size or np.any(index != np.arange(self.size)):
            d["index"] = [int(i) for i in index]
            d["grid_x"] = self.grid_x.reshape(self.size, -1).tolist()
            d["grid_nu"] = self.grid_nu.reshape(self.size, -1).tolist()
            d["grid_dmu"] = self.grid_dmu.reshape(-1).tolist()
        return d


@dataclass(eq=False)
class ProfileChart:
    n: int
    r: np.ndarray
    u: np.ndarray
    du: np.ndarray
    step: float
    orientation: float = -1.0
    kind = "profile"

    @property
    def h(self):
        return float(self.step)

    def to_dict(self, index):
        return {"kind": "profile", "n": self.n, "r": self.r.tolist(), "u": self.u.tolist(),
                "du": self.du.tolist(), "step": self.step, "orientation": self.orientation,
                "index": [int(i) for i in index]}


def _jsonable(obj):
    if obj is None:
        return None
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


# ---------------------------------------------------------------------------
# the surface record
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SampledHypersurface:
    n: int
    x: np.ndarray
    nu: np.ndarray
    dmu: np.ndarray
    boundary: np.ndarray
    source: str
    chart: Union[GridChart, ProfileChart]
    index: np.ndarray
    truncation_radius: Optional[float] = None
    recipe: Optional[dict] = None

    def __post_init__(self):
        for name in ("x", "nu", "dmu", "boundary", "index"):
            arr = getattr(self, name)
            arr.setflags(write=False)
        validate(self)

    @property
    def size(self):
        return self.x.shape[0]

    @property
    def radius(self):
        return np.linalg.norm(self.x, axis=1)

    @property
    def is_compact(self):
        return self.truncation_radius is None

    @property
    def catalog(self):
        if self.recipe and "catalog" in self.recipe:
            return catalog_from_dict(self.recipe["catalog"])
        return None

    def active_grid(self):
        """Boolean grid of chart nodes owned by this surface."""
        mask = np.zeros(self.chart.size, dtype=bool)
        mask[self.index] = True
        return mask.reshape(self.chart.shape)

    def __len__(self):
        return self.size


def validate(s):
    if s.n < 2:
        raise SurfaceError(f"intrinsic dimension must be >= 2 (got {s.n})")
    N = s.x.shape[0]
    if N == 0:
        raise SurfaceError("surface has no samples")
    if s.x.shape != (N, s.n + 1) or s.nu.shape != (N, s.n + 1):
        raise SurfaceError("positions and normals must have shape (N, n+1)")
    if s.dmu.shape != (N,) or s.boundary.shape != (N,) or s.index.shape != (N,):
        raise SurfaceError("per-sample arrays must have length N")
    for name in ("x", "nu", "dmu"):
        if not np.all(np.isfinite(getattr(s, name))):
            raise SurfaceError(f"non-finite values in {name}")
    err = np.abs(np.linalg.norm(s.nu, axis=1) - 1.0)
    if np.any(err > NORMAL_TOL):
        raise SurfaceError(f"normal of sample {int(np.argmax(err))} is not unit length")
    if np.any(s.dmu <= 0):
        raise SurfaceError(f"area weight of sample {int(np.argmin(s.dmu))} is not positive")


def _from_grid(chart, source, boundary_grid, recipe, truncation_radius=None, index=None):
    if index is None:
        index = np.arange(chart.size)
    flat = lambda a: a.reshape((chart.size,) + a.shape[chart.dim:])  # noqa: E731
    return SampledHypersurface(
        n=chart.grid_x.shape[-1] - 1,
        x=flat(chart.grid_x)[index].copy(),
        nu=flat(chart.grid_nu)[index].copy(),
        dmu=flat(chart.grid_dmu)[index].copy(),
        boundary=flat(boundary_grid)[index].copy(),
        source=source,
        chart=chart,
        index=np.asarray(index, dtype=int),
        truncation_radius=truncation_radius,
        recipe=recipe,
    )


def _rim(shape, axes):
    rim = np.zeros(shape, dtype=bool)
    for ax, kind in enumerate(axes):
        if kind == "open":
            sl = [slice(None)] * len(shape)
            sl[ax] = 0
            rim[tuple(sl)] = True
            sl[ax] = -1
            rim[tuple(sl)] = True
    return rim


# ---------------------------------------------------------------------------
# closed-form embeddings
# ---------------------------------------------------------------------------

def _sin_power_integral(m, a, b):
    """Exact integral of sin(t)**m over [a, b] (elementwise in a, b)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if m == 0:
        return b - a
    if m == 1:
        return np.cos(a) - np.cos(b)
    tail = (-np.cos(b) * np.sin(b) ** (m - 1) + np.cos(a) * np.sin(a) ** (m - 1)) / m
    return tail + (m - 1) / m * _sin_power_integral(m - 2, a, b)


def _unit_sphere_embed(angles):
    """Hyperspherical embedding; angles[..., :-1] polar, angles[..., -1] azimuth.

    The first polar angle is measured from the last coordinate axis.
    """
    angles = np.asarray(angles, dtype=float)
    k = angles.shape[-1]
    y = np.empty(angles.shape[:-1] + (k + 1,))
    prod = np.ones(angles.shape[:-1])
    for i in range(k - 1):
        y[..., i] = prod * np.cos(angles[..., i])
        prod = prod * np.sin(angles[..., i])
    y[..., k - 1] = prod * np.cos(angles[..., -1])
    y[..., k] = prod * np.sin(angles[..., -1])
    return np.roll(y, -1, axis=-1)


def _sphere_cell_measure(k, lo, hi):
    """Exact area of a unit S^k coordinate cell given per-axis edge arrays (broadcast)."""
    meas = hi[-1] - lo[-1]
    for i in range(k - 1):
        meas = meas * _sin_power_integral(k - 1 - i, lo[i], hi[i])
    return meas


def _plane_basis(v):
    v = np.asarray(v, dtype=float)
    v = v / np.linalg.norm(v)
    m = v.size
    drop = int(np.argmax(np.abs(v)))
    basis = []
    for j in range(m):
        if j == drop:
            continue
        e = np.zeros(m)
        e[j] = 1.0
        e = e - (e @ v) * v
        for b in basis:
            e = e - (e @ b) * b
        basis.append(e / np.linalg.norm(e))
    return v, np.array(basis)


def analytic_cells(analytic, edges):
    """Centres, normals and exact cell measures of a tensor grid of chart cells.

    ``edges`` is a list of 1-D arrays of cell edges per chart axis.  Returns
    arrays shaped ``(c_1, ..., c_n, ...)``.
    """
    kind = analytic["kind"]
    centres = [0.5 * (e[1:] + e[:-1]) for e in edges]
    C = np.stack(np.meshgrid(*centres, indexing="ij"), axis=-1)
    Lo = np.meshgrid(*[e[:-1] for e in edges], indexing="ij")
    Hi = np.meshgrid(*[e[1:] for e in edges], indexing="ij")
    centre = np.asarray(analytic.get("center", None) or 0.0)
    if kind == "sphere":
        R = analytic["radius"]
        nu = _unit_sphere_embed(C)
        x = R * nu
        dmu = R ** len(edges) * _sphere_cell_measure(len(edges), Lo, Hi)
    elif kind == "cylinder":
        k, R = analytic["k"], analytic["radius"]
        if k == 1:
            circ = _unit_sphere_embed(C[..., :1])
        else:
            circ = _unit_sphere_embed(C[..., :k])
        axial = C[..., k:]
        x = np.concatenate([R * circ, axial], axis=-1)
        nu = np.concatenate([circ, np.zeros_like(axial)], axis=-1)
        dmu = R**k * _sphere_cell_measure(k, Lo[:k], Hi[:k])
        for j in range(k, len(edges)):
            dmu = dmu * (Hi[j] - Lo[j])
    elif kind == "plane":
        v = np.asarray(analytic["normal"], dtype=float)
        basis = np.asarray(analytic["basis"], dtype=float)
        x = analytic["offset"] * v + C @ basis
        nu = np.broadcast_to(v, x.shape).copy()
        dmu = np.ones(C.shape[:-1])
        for j in range(len(edges)):
            dmu = dmu * (Hi[j] - Lo[j])
    else:
        raise SurfaceError(f"no closed form for chart kind {kind!r}")
    return x + centre, nu, dmu


# ---------------------------------------------------------------------------
# catalog construction
# ---------------------------------------------------------------------------

def _cell_edges(lo, hi, count):
    return np.linspace(lo, hi, count + 1)


def _grid_from_cells(analytic, edges, axes, pole_partner, source, recipe, r_trunc):
    x, nu, dmu = analytic_cells(analytic, edges)
    spacing = tuple(float(e[1] - e[0]) for e in edges)
    origin = tuple(float(0.5 * (e[0] + e[1])) for e in edges)
    chart = GridChart(
        shape=tuple(len(e) - 1 for e in edges),
        spacing=spacing,
        origin=origin,
        axes=tuple(axes),
        grid_x=x,
        grid_nu=nu,
        grid_dmu=dmu,
        pole_partner=pole_partner,
        analytic=analytic,
    )
    rim = _rim(chart.shape, chart.axes)
    surf = _from_grid(chart, source, rim, recipe)
    if r_trunc is not None:
        surf = truncate(surf, r_trunc)
    return surf


def _check_counts(counts):
    if any(c < MIN_AXIS for c in counts):
        raise SurfaceError(f"resolution must give >= {MIN_AXIS} samples per chart axis (got {counts})")


def make_catalog(cid: CatalogId, resolution=None, r_trunc: Optional[float] = None) -> SampledHypersurface:
    """Discretise a catalog surface.

    ``resolution`` depends on the surface: sphere -- polar cell count (azimuth
    gets twice as many); cylinder -- azimuthal count or ``(n_phi, n_axial)``;
    hyperplane -- spacing ``h`` (float) or cells per axis (int); tilted plane
    graph -- node spacing ``h``; bowl -- ODE step.
    """
    if isinstance(cid, Sphere):
        return _make_sphere(cid.n, cid.radius, resolution, cid)
    if isinstance(cid, Cylinder):
        return _make_cylinder(cid, resolution, r_trunc)
    if isinstance(cid, Hyperplane):
        return _make_hyperplane(cid, resolution, r_trunc)
    if isinstance(cid, TiltedPlaneGraph):
        return _make_tilted(cid, resolution, r_trunc)
    if isinstance(cid, Bowl):
        from .translators import bowl_solve

        if r_trunc is None:
            raise SurfaceError("the bowl is noncompact: a truncation radius (r_max) is required")
        step = 0.01 if resolution is None else float(resolution)
        return bowl_solve(cid.n, r_trunc, step)[1]
    raise SurfaceError(f"unknown catalog id {cid!r}")


def make_sphere(n: int, radius: float, resolution=None) -> SampledHypersurface:
    """Round sphere of arbitrary radius (a custom surface unless radius = sqrt(2n))."""
    return _make_sphere(n, radius, resolution, None)


def _make_sphere(n, radius, resolution, cid):
    if n < 2:
        raise SurfaceError(f"intrinsic dimension must be >= 2 (got {n})")
    n_theta = 32 if resolution is None else int(resolution)
    n_phi = 2 * n_theta
    _check_counts([n_theta, n_phi])
    edges = [_cell_edges(0.0, math.pi, n_theta) for _ in range(n - 1)]
    edges.append(_cell_edges(0.0, 2.0 * math.pi, n_phi))
    axes = ["pole"] * (n - 1) + ["periodic"]
    partner = n - 1 if n == 2 else None
    analytic = {"kind": "sphere", "radius": float(radius), "center": None}
    if cid is not None:
        recipe = {"catalog": catalog_to_dict(cid), "resolution": n_theta, "r_trunc": None}
        source = catalog_label(cid)
    else:
        recipe = {"sphere": {"n": n, "radius": float(radius)}, "resolution": n_theta, "r_trunc": None}
        source = "custom"
    return _grid_from_cells(analytic, edges, axes, partner, source, recipe, None)


def _make_cylinder(cid, resolution, r_trunc):
    k, n = cid.k, cid.n
    if n < 2 or not (1 <= k <= n - 1):
        raise SurfaceError(f"invalid cylinder S^{k} x R^{n - k}: need 1 <= k <= n-1 and n >= 2")
    if r_trunc is None:
        raise SurfaceError("cylinders are noncompact: a truncation radius is required")
    R = cid.radius
    if r_trunc <= R:
        raise SurfaceError("truncation radius must exceed the spherical factor radius sqrt(2k)")
    if resolution is None:
        resolution = 32
    if isinstance(resolution, (tuple, list)):
        n_phi, n_ax = int(resolution[0]), int(resolution[1])
    else:
        n_phi = int(resolution)
        h_target = 2.0 * math.pi * R / n_phi
        L0 = math.sqrt(r_trunc**2 - R**2)
        n_ax = max(MIN_AXIS, int(math.ceil(2.0 * L0 / h_target)))
    L = math.sqrt(r_trunc**2 - R**2)
    edges, axes = [], []
    if k == 1:
        edges.append(_cell_edges(0.0, 2.0 * math.pi, n_phi))
        axes.append("periodic")
    else:
        for _ in range(k - 1):
            edges.append(_cell_edges(0.0, math.pi, n_phi // 2))
            axes.append("pole")
        edges.append(_cell_edges(0.0, 2.0 * math.pi, n_phi))
        axes.append("periodic")
    for _ in range(n - k):
        edges.append(_cell_edges(-L, L, n_ax))
        axes.append("open")
    _check_counts([len(e) - 1 for e in edges])
    analytic = {"kind": "cylinder", "k": k, "radius": R, "center": None}
    recipe = {"catalog": catalog_to_dict(cid), "resolution": [n_phi, n_ax], "r_trunc": float(r_trunc)}
    return _grid_from_cells(analytic, edges, axes, None, catalog_label(cid), recipe, r_trunc)


def _make_hyperplane(cid, resolution, r_trunc):
    if r_trunc is None:
        raise SurfaceError("hyperplanes are noncompact: a truncation radius is required")
    n = cid.n
    if n < 2:
        raise SurfaceError(f"intrinsic dimension must be >= 2 (got {n})")
    v, basis = _plane_basis(cid.normal)
    if abs(cid.offset) >= r_trunc:
        raise SurfaceError("hyperplane does not meet the truncation ball")
    L = math.sqrt(r_trunc**2 - cid.offset**2)
    if resolution is None:
        resolution = 0.25
    if isinstance(resolution, (int, np.integer)):
        cells = int(resolution)
    else:
        cells = int(math.ceil(2.0 * L / float(resolution)))
    _check_counts([cells])
    edges = [_cell_edges(-L, L, cells) for _ in range(n)]
    analytic = {"kind": "plane", "normal": v.tolist(), "offset": float(cid.offset),
                "basis": basis.tolist(), "center": None}
    recipe = {"catalog": catalog_to_dict(cid), "resolution": cells, "r_trunc": float(r_trunc)}
    return _grid_from_cells(analytic, edges, ["open"] * n, None, catalog_label(cid), recipe, r_trunc)


def _make_tilted(cid, resolution, r_trunc):
    v = np.asarray(cid.v, dtype=float)
    v = v / np.linalg.norm(v)
    if v[-1] < 0:
        v = -v
    if abs(v[-1]) < 1e-8:
        raise SurfaceError("tilted plane must not be vertical (v_{n+1} != 0)")
    if r_trunc is None:
        raise SurfaceError("tilted planes are noncompact: a half-width is required")
    n = v.size - 1
    h = 0.125 if resolution is None else float(resolution)
    count = int(round(2.0 * r_trunc / h)) + 1
    slope = -v[:-1] / v[-1]
    patch = GraphPatch.from_function(lambda p: p @ slope, [(-r_trunc, r_trunc)] * n, count)
    s = make_graph(patch)
    recipe = dict(s.recipe)
    recipe["catalog"] = catalog_to_dict(cid)
    return _replace(s, source=catalog_label(cid), recipe=recipe)


def _replace(s, **kw):
    d = {k: getattr(s, k) for k in ("n", "x", "nu", "dmu", "boundary", "source", "chart", "index",
                                     "truncation_radius", "recipe")}
    d.update(kw)
    for k in ("x", "nu", "dmu", "boundary", "index"):
        d[k] = np.array(d[k])
    return SampledHypersurface(**d)


# ---------------------------------------------------------------------------
# graph patches
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class GraphPatch:
    """Graph of ``u`` over an axis-aligned box in the plane orthogonal to ``v``."""

    lo: tuple
    hi: tuple
    grid_shape: tuple
    spacing: float
    heights: np.ndarray
    v: tuple = None
    basis: np.ndarray = None
    height_fn: Optional[Callable] = field(default=None, repr=False)

    def __post_init__(self):
        n = len(self.grid_shape)
        if self.v is None:
            self.v = tuple(np.eye(n + 1)[n])
        if self.basis is None:
            self.basis = np.eye(n + 1)[:n]
        self.heights = np.asarray(self.heights, dtype=float)
        self.basis = np.asarray(self.basis, dtype=float)
        if any(c < MIN_AXIS for c in self.grid_shape):
            raise SurfaceError(f"graph grid too small: need >= {MIN_AXIS} nodes per axis")
        if self.spacing <= 0:
            raise SurfaceError("grid spacing must be positive")
        if self.heights.shape != tuple(self.grid_shape):
            raise SurfaceError("heights array does not match grid_shape")
        if not np.all(np.isfinite(self.heights)):
            raise SurfaceError("non-finite heights")
        v = np.asarray(self.v, dtype=float)
        frame = np.vstack([self.basis, v])
        if not np.allclose(frame @ frame.T, np.eye(n + 1), atol=1e-12):
            raise SurfaceError("tilt frame must be orthonormal")
        for a in range(n):
            width = self.hi[a] - self.lo[a]
            if abs(width - (self.grid_shape[a] - 1) * self.spacing) > 1e-9 * max(1.0, width):
                raise SurfaceError("box width must equal (nodes - 1) * spacing on every axis")

    @property
    def n(self):
        return len(self.grid_shape)

    def nodes(self):
        axes = [self.lo[a] + self.spacing * np.arange(self.grid_shape[a]) for a in range(self.n)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    @classmethod
    def from_function(cls, fn, box, count, v=None, basis=None):
        """Sample ``fn`` (vectorised over points ``(..., n)``) on ``count`` nodes per axis of ``box``."""
        n = len(box)
        lo = tuple(float(b[0]) for b in box)
        hi = tuple(float(b[1]) for b in box)
        h = (hi[0] - lo[0]) / (count - 1)
        hi = tuple(lo[a] + h * (count - 1) for a in range(n))
        axes = [lo[a] + h * np.arange(count) for a in range(n)]
        P = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        return cls(lo=lo, hi=hi, grid_shape=(count,) * n, spacing=h, heights=fn(P),
                   v=v, basis=basis, height_fn=fn)


def graph_frame_fields(du, v, basis):
    """Unit normals and the area factor ``W`` from height gradients."""
    v = np.asarray(v, dtype=float)
    W = np.sqrt(1.0 + np.sum(du**2, axis=-1))
    nu = (v - du @ basis) / W[..., None]
    return nu, W


def make_graph(patch: GraphPatch, source="custom") -> SampledHypersurface:
    n = patch.n
    P = patch.nodes()
    u = patch.heights
    du = np.stack(np.gradient(u, patch.spacing, edge_order=2), axis=-1) if n > 1 else \
        np.gradient(u, patch.spacing, edge_order=2)[..., None]
    v = np.asarray(patch.v, dtype=float)
    nu, W = graph_frame_fields(du, v, patch.basis)
    x = P @ patch.basis + u[..., None] * v
    if np.any(nu @ v <= 0):
        raise SurfaceError("graph patch is not graphical (<v, nu> <= 0)")
    chart = GridChart(
        shape=tuple(patch.grid_shape),
        spacing=(patch.spacing,) * n,
        origin=tuple(patch.lo),
        axes=("open",) * n,
        grid_x=x,
        grid_nu=nu,
        grid_dmu=W * patch.spacing**n,
        graph={"v": v, "basis": patch.basis, "heights": u, "lo": tuple(patch.lo)},
        height_fn=patch.height_fn,
    )
    recipe = {"graph": True, "resolution": int(patch.grid_shape[0]), "r_trunc": None}
    return _from_grid(chart, source, _rim(chart.shape, chart.axes), recipe)


def graph_patch_of(obj) -> GraphPatch:
    """Recover the :class:`GraphPatch` behind a graph surface or chart."""
    ch = obj.chart if isinstance(obj, SampledHypersurface) else obj
    if getattr(ch, "graph", None) is None:
        raise SurfaceError("surface is not a graph patch")
    g = ch.graph
    lo = tuple(ch.origin)
    hi = tuple(lo[a] + ch.spacing[a] * (ch.shape[a] - 1) for a in range(ch.dim))
    return GraphPatch(lo=lo, hi=hi, grid_shape=tuple(ch.shape), spacing=ch.spacing[0],
                      heights=np.asarray(g["heights"]), v=tuple(g["v"]), basis=np.asarray(g["basis"]),
                      height_fn=ch.height_fn)


def height_interpolant(patch: GraphPatch):
    """Callable ``p -> u(p)`` plus optional derivative evaluator.

    Uses the supplied height function when there is one; otherwise a bicubic
    spline (n = 2) or a cubic tensor interpolant (n >= 3).
    """
    if patch.height_fn is not None:
        return patch.height_fn
    from scipy.interpolate import RectBivariateSpline, RegularGridInterpolator

    axes = [patch.lo[a] + patch.spacing * np.arange(patch.grid_shape[a]) for a in range(patch.n)]
    if patch.n == 2:
        spl = RectBivariateSpline(axes[0], axes[1], patch.heights, kx=3, ky=3, s=0)

        def fn(P):
            P = np.asarray(P)
            return spl.ev(P[..., 0], P[..., 1])

        fn.spline = spl
        return fn
    rgi = RegularGridInterpolator(axes, patch.heights, method="cubic")
    return lambda P: rgi(np.asarray(P))


# ---------------------------------------------------------------------------
# truncation, refinement, translation
# ---------------------------------------------------------------------------

def truncate(surface: SampledHypersurface, R: float) -> SampledHypersurface:
    """Keep the samples with ``|x| <= R``."""
    if not R > 0:
        raise SurfaceError("truncation radius must be positive")
    keep = surface.radius <= R
    if not np.any(keep):
        raise SurfaceError(f"empty truncation: the sampled surface does not meet B_{R}")
    index = surface.index[keep]
    boundary = surface.boundary[keep].copy()
    ch = surface.chart
    if isinstance(ch, GridChart):
        active = np.zeros(ch.size, dtype=bool)
        active[index] = True
        active = active.reshape(ch.shape)
        near_cut = np.zeros_like(active)
        for ax, kind in enumerate(ch.axes):
            for step in (1, -1):
                nb = np.roll(active, step, axis=ax)
                if kind == "open":
                    sl = [slice(None)] * ch.dim
                    sl[ax] = 0 if step == 1 else -1
                    nb[tuple(sl)] = True
                near_cut |= active & ~nb
        boundary |= near_cut.reshape(-1)[index]
    else:
        last = index.max()
        boundary |= index == last
    tr = R if surface.truncation_radius is None else min(R, surface.truncation_radius)
    if surface.is_compact and np.all(keep):
        tr = None
    recipe = dict(surface.recipe or {})
    recipe["truncate"] = min(R, recipe.get("truncate", math.inf))
    return SampledHypersurface(
        n=surface.n, x=surface.x[keep].copy(), nu=surface.nu[keep].copy(), dmu=surface.dmu[keep].copy(),
        boundary=boundary, source=surface.source, chart=ch, index=np.asarray(index),
        truncation_radius=tr, recipe=recipe,
    )


def translate(surface: SampledHypersurface, shift: Sequence[float]) -> SampledHypersurface:
    """Rigidly translate a grid surface (used for equivariance checks)."""
    shift = np.asarray(shift, dtype=float)
    ch = surface.chart
    if not isinstance(ch, GridChart):
        raise SurfaceError("only grid charts can be translated")
    analytic = None
    if ch.analytic is not None:
        analytic = dict(ch.analytic)
        old = np.asarray(analytic.get("center") or np.zeros_like(shift))
        analytic["center"] = (old + shift).tolist()
    graph = None if ch.graph is None else dict(ch.graph)
    new_chart = GridChart(shape=ch.shape, spacing=ch.spacing, origin=ch.origin, axes=ch.axes,
                          grid_x=ch.grid_x + shift, grid_nu=ch.grid_nu, grid_dmu=ch.grid_dmu,
                          pole_partner=ch.pole_partner, analytic=analytic, graph=graph,
                          height_fn=ch.height_fn)
    recipe = dict(surface.recipe or {})
    recipe["shift"] = (np.asarray(recipe.get("shift", np.zeros_like(shift))) + shift).tolist()
    return SampledHypersurface(n=surface.n, x=surface.x + shift, nu=surface.nu.copy(), dmu=surface.dmu.copy(),
                               boundary=surface.boundary.copy(), source="custom", chart=new_chart,
                               index=surface.index.copy(), truncation_radius=surface.truncation_radius,
                               recipe=recipe)


def refine(surface: SampledHypersurface, factor: int) -> SampledHypersurface:
    """Resample with the chart spacing divided by ``factor``."""
    if int(factor) != factor or factor < 2:
        raise SurfaceError("refinement factor must be an integer >= 2")
    factor = int(factor)
    recipe = surface.recipe or {}
    if "catalog" in recipe and "graph" not in recipe:
        cid = catalog_from_dict(recipe["catalog"])
        res = recipe["resolution"]
        if isinstance(cid, Bowl):
            out = make_catalog(cid, float(res) / factor, recipe["r_trunc"])
        elif isinstance(cid, Hyperplane):
            out = make_catalog(cid, int(res) * factor, recipe["r_trunc"])
        elif isinstance(res, list):
            out = make_catalog(cid, tuple(int(r) * factor for r in res), recipe["r_trunc"])
        else:
            out = make_catalog(cid, int(res) * factor, recipe["r_trunc"])
    elif "sphere" in recipe:
        out = make_sphere(recipe["sphere"]["n"], recipe["sphere"]["radius"], int(recipe["resolution"]) * factor)
    elif "graph" in recipe:
        patch = graph_patch_of(surface)
        fn = height_interpolant(patch)
        count = (patch.grid_shape[0] - 1) * factor + 1
        box = list(zip(patch.lo, patch.hi))
        fine = GraphPatch.from_function(fn, box, count, v=patch.v, basis=patch.basis)
        fine.height_fn = patch.height_fn
        out = make_graph(fine, source=surface.source)
        out = _replace(out, recipe={**recipe, "resolution": count})
    elif "profile" in recipe:
        from .translators import bowl_solve

        p = recipe["profile"]
        out = bowl_solve(p["n"], p["r_max"], p["step"] / factor)[1]
    else:
        raise SurfaceError("custom surface carries no interpolation data; cannot refine")
    if "truncate" in recipe:
        out = truncate(out, recipe["truncate"])
    if "shift" in recipe:
        out = translate(out, recipe["shift"])
    if surface.source != out.source:
        out = _replace(out, source=surface.source)
    return out


# ---------------------------------------------------------------------------
# JSON (schema surface.v1)
# ---------------------------------------------------------------------------

def to_json(surface: SampledHypersurface) -> bytes:
    doc = {
        "version": "1",
        "n": int(surface.n),
        "source": surface.source,
        "samples": [
            {"x": surface.x[i].tolist(), "nu": surface.nu[i].tolist(), "dmu": float(surface.dmu[i]),
             "boundary": bool(surface.boundary[i])}
            for i in range(surface.size)
        ],
        "chart": surface.chart.to_dict(surface.index),
        "truncation_radius": surface.truncation_radius,
        "recipe": _jsonable(surface.recipe),
    }
    return json.dumps(doc, allow_nan=False).encode("utf-8")


def _finite(v, what):
    arr = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise SurfaceError(f"non-finite values in {what}")
    return arr


def from_json(data: Union[bytes, str]) -> SampledHypersurface:
    try:
        doc = json.loads(data)
    except (TypeError, ValueError) as exc:
        raise SurfaceError(f"invalid JSON: {exc}") from exc
    try:
        if doc.get("version") != "1":
            raise SurfaceError("unsupported surface schema version")
        n = int(doc["n"])
        if n < 2:
            raise SurfaceError(f"intrinsic dimension must be >= 2 (got {n})")
        samples = doc["samples"]
        x = _finite([s["x"] for s in samples], "x")
        nu = _finite([s["nu"] for s in samples], "nu")
        dmu = _finite([s["dmu"] for s in samples], "dmu")
        boundary = np.array([bool(s["boundary"]) for s in samples])
        ch = doc["chart"]
    except (KeyError, TypeError) as exc:
        raise SurfaceError(f"schema violation: missing or malformed field {exc}") from exc
    if ch["kind"] == "grid":
        shape = tuple(ch["shape"])
        size = int(np.prod(shape))
        if "index" in ch:
            index = np.asarray(ch["index"], dtype=int)
            gx = _finite(ch["grid_x"], "grid_x").reshape(shape + (n + 1,))
            gnu = _finite(ch["grid_nu"], "grid_nu").reshape(shape + (n + 1,))
            gdmu = _finite(ch["grid_dmu"], "grid_dmu").reshape(shape)
        else:
            if len(samples) != size:
                raise SurfaceError("sample count does not match chart shape")
            index = np.arange(size)
            gx, gnu, gdmu = x.reshape(shape + (n + 1,)), nu.reshape(shape + (n + 1,)), dmu.reshape(shape)
        graph = None
        if "graph" in ch:
            g = ch["graph"]
            graph = {"v": np.asarray(g["v"]), "basis": np.asarray(g["basis"]),
                     "heights": np.asarray(g["heights"]), "lo": tuple(ch["origin"])}
        chart = GridChart(shape=shape, spacing=tuple(ch["spacing"]), origin=tuple(ch["origin"]),
                          axes=tuple(ch["axes"]), grid_x=gx, grid_nu=gnu, grid_dmu=gdmu,
                          pole_partner=ch.get("pole_partner"), analytic=ch.get("analytic"), graph=graph)
    elif ch["kind"] == "profile":
        chart = ProfileChart(n=int(ch["n"]), r=np.asarray(ch["r"]), u=np.asarray(ch["u"]),
                             du=np.asarray(ch["du"]), step=float(ch["step"]),
                             orientation=float(ch.get("orientation", -1.0)))
        index = np.asarray(ch["index"], dtype=int)
    else:
        raise SurfaceError(f"unknown chart kind {ch['kind']!r}")
    return SampledHypersurface(n=n, x=x, nu=nu, dmu=dmu, boundary=boundary, source=doc["source"],
                               chart=chart, index=index, truncation_radius=doc.get("truncation_radius"),
                               recipe=doc.get("recipe"))


def surfaces_equal(a: SampledHypersurface, b: SampledHypersurface) -> bool:
    """Field-for-field equality of the sampled data."""
    return (a.n == b.n and a.source == b.source and np.array_equal(a.x, b.x) and np.array_equal(a.nu, b.nu)
            and np.array_equal(a.dmu, b.dmu) and np.array_equal(a.boundary, b.boundary)
            and np.array_equal(a.index, b.index) and a.truncation_radius == b.truncation_radius)
