"""Pointwise differential geometry of sampled hypersurfaces.

Conventions: ``H = div_S nu``; the second fundamental form is
``b_ij = -<X_ij, nu>`` so that ``H = g^ij b_ij``.  The shape operator is
stored in the orthonormal tangent frame ``g^{-1/2} X_i`` (symmetric).
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _diff
from .surfaces import GridChart, ProfileChart, SampledHypersurface, analytic_cells

KATO_TOL = 1e-10


class GeometryError(ArithmeticError):
    pass


@dataclass(frozen=True, eq=False)
class GeometryFields:
    H: np.ndarray
    shape_op: np.ndarray
    normA2: np.ndarray
    gradA2: np.ndarray
    gradNormA2: np.ndarray
    radius: np.ndarray
    meanH_grad: np.ndarray
    meanH_grad_bound: np.ndarray
    lower_accuracy: np.ndarray
    kato_tol: float = KATO_TOL
    closed_form: bool = False

    @property
    def normA(self):
        return np.sqrt(self.normA2)


# ---------------------------------------------------------------------------
# grid charts
# ---------------------------------------------------------------------------

def _inv_sqrt(g):
    w, V = np.linalg.eigh(g)
    return np.einsum("...ik,...k,...jk->...ij", V, 1.0 / np.sqrt(w), V)


class GridCalculus:
    """Metric quantities and strong-form operators on the full chart grid."""

    def __init__(self, chart: GridChart):
        self.chart = chart
        d1, d2 = _diff.jet(chart.grid_x, chart)
        n = chart.dim
        self.Xi = np.stack(d1, axis=-2)
        self.Xij = np.stack([np.stack(row, axis=-2) for row in d2], axis=-3)
        self.g = np.einsum("...im,...jm->...ij", self.Xi, self.Xi)
        self.ginv = np.linalg.inv(self.g)
        self.dual = np.einsum("...ij,...jm->...im", self.ginv, self.Xi)
        self.T = np.einsum("...ij,...ijm->...m", self.ginv, self.Xij)
        self.n = n

    def d1(self, f):
        return [_diff.derivative(f, self.chart, i) for i in range(self.n)]

    def gradient(self, f):
        """Ambient gradient vector of a grid scalar."""
        d = np.stack(self.d1(f), axis=-1)
        return np.einsum("...i,...im->...m", d, self.dual)

    def grad_norm2(self, f):
        d = np.stack(self.d1(f), axis=-1)
        return np.einsum("...i,...ij,...j->...", d, self.ginv, d)

    def laplacian(self, f):
        d1, d2 = _diff.jet(f, self.chart)
        hess = np.stack([np.stack(row, axis=-1) for row in d2], axis=-2)
        grad = np.einsum("...i,...im->...m", np.stack(d1, axis=-1), self.dual)
        return np.einsum("...ij,...ij->...", self.ginv, hess) - np.einsum("...m,...m->...", self.T, grad)

    def directional(self, f, w):
        """<w, grad f> for a constant vector or a grid vector field ``w``."""
        return np.einsum("...m,...m->...", self.gradient(f), np.broadcast_to(w, self.chart.grid_x.shape))


def _grid_fields(chart: GridChart):
    n = chart.dim
    m = n + 1
    shape = chart.shape
    an = chart.analytic
    if an is not None and an["kind"] in ("sphere", "cylinder", "plane"):
        if an["kind"] == "sphere":
            diag = np.full(n, 1.0 / an["radius"])
        elif an["kind"] == "cylinder":
            diag = np.zeros(n)
            diag[: an["k"]] = 1.0 / an["radius"]
        else:
            diag = np.zeros(n)
        S = np.broadcast_to(np.diag(diag), shape + (n, n)).copy()
        zero = np.zeros(shape)
        return {
            "shape_op": S,
            "H": np.full(shape, diag.sum()),
            "normA2": np.full(shape, float(diag @ diag)),
            "gradA2": zero,
            "gradNormA2": zero.copy(),
            "gradH2": zero.copy(),
            "closed_form": True,
        }
    calc = grid_calculus(chart)
    nu = chart.grid_nu
    b = -np.einsum("...ijm,...m->...ij", calc.Xij, nu)
    b = 0.5 * (b + np.swapaxes(b, -1, -2))
    c = _inv_sqrt(calc.g)
    S = c @ b @ c
    S = 0.5 * (S + np.swapaxes(S, -1, -2))
    H = np.trace(S, axis1=-2, axis2=-1)
    normA2 = np.einsum("...ij,...ij->...", S, S)
    A_amb = np.einsum("...im,...ij,...jk->...mk", calc.dual, b, calc.dual)
    P = np.eye(m) - nu[..., :, None] * nu[..., None, :]
    Ti = []
    for i in range(n):
        dA = _diff.derivative(A_amb, chart, i)
        Ti.append(P @ dA @ P)
    Ti = np.stack(Ti, axis=-3)
    gradA2 = np.einsum("...ij,...imk,...jmk->...", calc.ginv, Ti, Ti)
    normA = np.sqrt(np.einsum("...mk,...mk->...", A_amb, A_amb))
    proj = np.einsum("...imk,...mk->...i", Ti, A_amb)
    safe = np.where(normA > 0, normA, 1.0)
    a = np.where(normA[..., None] > 1e-300, proj / safe[..., None], 0.0)
    gradNormA2 = np.einsum("...i,...ij,...j->...", a, calc.ginv, a)
    gradH2 = calc.grad_norm2(H)
    for name, arr in (("H", H), ("|A|^2", normA2), ("|grad A|^2", gradA2)):
        bad = ~np.isfinite(arr)
        if np.any(bad):
            idx = int(np.flatnonzero(bad.reshape(-1))[0])
            raise GeometryError(f"non-finite {name} at chart node {idx}")
    return {"shape_op": S, "H": H, "normA2": normA2, "gradA2": gradA2, "gradNormA2": gradNormA2,
            "gradH2": gradH2, "closed_form": False}


def grid_calculus(chart: GridChart) -> GridCalculus:
    calc = getattr(chart, "_calculus", None)
    if calc is None:
        calc = GridCalculus(chart)
        chart._calculus = calc
    return calc


def _chart_fields(chart):
    f = getattr(chart, "_fields", None)
    if f is None:
        f = _grid_fields(chart) if isinstance(chart, GridChart) else _profile_fields(chart)
        chart._fields = f
    return f


# ---------------------------------------------------------------------------
# profile charts (rotational about the last axis)
# ---------------------------------------------------------------------------

def radial_d1(f, h, parity=1.0):
    """Fourth-order derivative on a node grid starting at r = 0 with reflection parity."""
    f = np.asarray(f, dtype=float)
    p = np.concatenate([parity * f[2:0:-1], f])
    out = np.empty_like(f)
    core = (-p[4:] + 8.0 * p[3:-1] - 8.0 * p[1:-3] + p[:-4]) / (12.0 * h)
    out[: core.size] = core
    # one-sided fourth order at the outer end
    for j in (1, 2):
        i = f.size - j
        s = f[i - 4: i + 1][::-1]
        out[i] = (25 * s[0] - 48 * s[1] + 36 * s[2] - 16 * s[3] + 3 * s[4]) / (12.0 * h)
    return out


def radial_d2(f, h, parity=1.0):
    f = np.asarray(f, dtype=float)
    p = np.concatenate([parity * f[2:0:-1], f])
    out = np.empty_like(f)
    core = (-p[4:] + 16.0 * p[3:-1] - 30.0 * p[2:-2] + 16.0 * p[1:-3] - p[:-4]) / (12.0 * h**2)
    out[: core.size] = core
    for j in (1, 2):
        i = f.size - j
        s = f[i - 5: i + 1][::-1]
        out[i] = (45 * s[0] - 154 * s[1] + 214 * s[2] - 156 * s[3] + 61 * s[4] - 10 * s[5]) / (12.0 * h**2)
    return out


class ProfileCalculus:
    """Radial operators for rotationally symmetric fields on a profile chart."""

    def __init__(self, chart: ProfileChart):
        self.chart = chart
        self.r = chart.r
        self.h = chart.step
        self.du = chart.du
        self.d2u = radial_d1(chart.du, chart.step, parity=-1.0)
        self.W = np.sqrt(1.0 + self.du**2)

    def d1(self, f):
        return radial_d1(f, self.h)

    def ds(self, f):
        return self.d1(f) / self.W

    def grad_norm2(self, f):
        return self.ds(f) ** 2

    def laplacian(self, f):
        n = self.chart.n
        fr = radial_d1(f, self.h)
        frr = radial_d2(f, self.h)
        W2 = self.W**2
        out = np.empty_like(fr)
        r = self.r
        out[1:] = frr[1:] / W2[1:] - fr[1:] * self.du[1:] * self.d2u[1:] / W2[1:] ** 2 \
            + (n - 1) * fr[1:] / (r[1:] * W2[1:])
        out[0] = n * frr[0]
        return out

    def dot_axis(self, f):
        """<e_{n+1}, grad f>."""
        return self.d1(f) * self.du / self.W**2

    def dot_position(self, f):
        """<x, grad f> with x the orbit representative."""
        return self.d1(f) * (self.r + self.chart.u * self.du) / self.W**2


def profile_calculus(chart: ProfileChart) -> ProfileCalculus:
    calc = getattr(chart, "_calculus", None)
    if calc is None:
        calc = ProfileCalculus(chart)
        chart._calculus = calc
    return calc


def _profile_fields(chart: ProfileChart):
    n = chart.n
    calc = profile_calculus(chart)
    W, du, d2u, r = calc.W, calc.du, calc.d2u, calc.r
    k1 = d2u / W**3
    k2 = np.empty_like(k1)
    k2[1:] = du[1:] / (r[1:] * W[1:])
    k2[0] = d2u[0]
    sign = -chart.orientation
    k1, k2 = sign * k1, sign * k2
    S = np.zeros(r.shape + (n, n))
    S[:, 0, 0] = k1
    for i in range(1, n):
        S[:, i, i] = k2
    H = k1 + (n - 1) * k2
    normA2 = k1**2 + (n - 1) * k2**2
    k1s, k2s = calc.ds(k1), calc.ds(k2)
    gradA2 = k1s**2 + 3.0 * (n - 1) * k2s**2
    gradNormA2 = calc.ds(np.sqrt(normA2)) ** 2
    return {"shape_op": S, "H": H, "normA2": normA2, "gradA2": gradA2, "gradNormA2": gradNormA2,
            "gradH2": calc.ds(H) ** 2, "closed_form": False}


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------

def interior_mask(surface: SampledHypersurface, depth: int = 2) -> np.ndarray:
    """Samples off the boundary and at least ``depth`` cells from the chart rim or cut."""
    ch = surface.chart
    if isinstance(ch, GridChart):
        active = surface.active_grid()
        deep = _diff.interior_depth_mask(ch, active, depth)
        return deep.reshape(-1)[surface.index] & ~surface.boundary
    idx = surface.index
    return ~surface.boundary & (idx <= idx.max() - depth)


def compute_geometry(surface: SampledHypersurface) -> GeometryFields:
    ch = surface.chart
    f = _chart_fields(ch)
    idx = surface.index
    if isinstance(ch, GridChart):
        take = lambda a: ch.gather(idx, a)  # noqa: E731
        lower = surface.boundary | ~interior_mask(surface, 1)
    else:
        take = lambda a: np.asarray(a)[idx]  # noqa: E731
        lower = surface.boundary | (idx == 0) | (idx >= idx.max() - 1)
    normA2 = take(f["normA2"])
    radius = surface.radius
    fields = GeometryFields(
        H=take(f["H"]),
        shape_op=take(f["shape_op"]),
        normA2=normA2,
        gradA2=take(f["gradA2"]),
        gradNormA2=take(f["gradNormA2"]),
        radius=radius,
        meanH_grad=np.sqrt(take(f["gradH2"])),
        meanH_grad_bound=0.5 * radius * np.sqrt(normA2),
        lower_accuracy=lower,
        closed_form=f["closed_form"],
    )
    bad = ~np.isfinite(fields.H) | ~np.isfinite(fields.normA2)
    if np.any(bad):
        raise GeometryError(f"non-finite derivative at sample {int(np.flatnonzero(bad)[0])}")
    return fields


def shrinker_residual(surface: SampledHypersurface, fields: Optional[GeometryFields] = None, depth: int = 1):
    """Per-sample ``H - <x, nu>/2`` and its sup over interior samples."""
    if fields is None:
        fields = compute_geometry(surface)
    res = fields.H - 0.5 * np.einsum("ij,ij->i", surface.x, surface.nu)
    mask = interior_mask(surface, depth)
    sup = float(np.max(np.abs(res[mask]))) if np.any(mask) else float(np.max(np.abs(res)))
    return {"residual": res, "sup_norm": sup}


def linear_growth_constant(surface: SampledHypersurface, R: float, fields: Optional[GeometryFields] = None) -> float:
    """sup over samples in B_R of |A| / (1 + |x|)."""
    if fields is None:
        fields = compute_geometry(surface)
    inside = fields.radius <= R
    if not np.any(inside):
        raise GeometryError(f"no samples inside B_{R}")
    return float(np.max(np.sqrt(fields.normA2[inside]) / (1.0 + fields.radius[inside])))


def fields_csv(surface: SampledHypersurface, fields: Optional[GeometryFields] = None) -> str:
    if fields is None:
        fields = compute_geometry(surface)
    res = shrinker_residual(surface, fields)["residual"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["index"] + [f"x{i + 1}" for i in range(surface.n + 1)] + ["H", "normA2", "residual"])
    for i in range(surface.size):
        w.writerow([i] + [repr(float(v)) for v in surface.x[i]]
                   + [repr(float(fields.H[i])), repr(float(fields.normA2[i])), repr(float(res[i]))])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# local resampling for small-ball integrals
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BallCloud:
    """Fine cell-centred quadrature of ``Sigma`` intersected with a ball."""

    x: np.ndarray
    nu: np.ndarray
    dmu: np.ndarray
    H: np.ndarray
    normA2: np.ndarray
    center: np.ndarray
    radius: float

    @property
    def dist(self):
        return np.linalg.norm(self.x - self.center, axis=1)

    def integrate(self, values):
        return float(np.sum(np.asarray(values) * self.dmu))


def _graph_cells(chart, edges):
    from .surfaces import graph_patch_of, height_interpolant

    g = chart.graph
    centres = [0.5 * (e[1:] + e[:-1]) for e in edges]
    P = np.stack(np.meshgrid(*centres, indexing="ij"), axis=-1)
    vol = np.ones(P.shape[:-1])
    for j, e in enumerate(edges):
        shape = [1] * len(edges)
        shape[j] = -1
        vol = vol * np.diff(e).reshape(shape)
    n = P.shape[-1]
    v = np.asarray(g["v"], dtype=float)
    basis = np.asarray(g["basis"], dtype=float)
    fn = chart.height_fn
    if fn is None:
        fn = height_interpolant(graph_patch_of(chart))
    spl = getattr(fn, "spline", None)
    if spl is not None:
        u = spl.ev(P[..., 0], P[..., 1])
        du = np.stack([spl.ev(P[..., 0], P[..., 1], dx=1), spl.ev(P[..., 0], P[..., 1], dy=1)], axis=-1)
        d2 = np.empty(P.shape[:-1] + (2, 2))
        d2[..., 0, 0] = spl.ev(P[..., 0], P[..., 1], dx=2)
        d2[..., 1, 1] = spl.ev(P[..., 0], P[..., 1], dy=2)
        d2[..., 0, 1] = d2[..., 1, 0] = spl.ev(P[..., 0], P[..., 1], dx=1, dy=1)
    else:
        eps = 1e-4 * max(1.0, float(np.max(np.abs(P))))
        u = fn(P)
        du = np.empty(P.shape)
        d2 = np.empty(P.shape[:-1] + (n, n))
        I = np.eye(n) * eps
        for i in range(n):
            up, um = fn(P + I[i]), fn(P - I[i])
            du[..., i] = (up - um) / (2 * eps)
            d2[..., i, i] = (up - 2 * u + um) / eps**2
            for j in range(i + 1, n):
                d2[..., i, j] = d2[..., j, i] = (fn(P + I[i] + I[j]) - fn(P + I[i] - I[j])
                                                 - fn(P - I[i] + I[j]) + fn(P - I[i] - I[j])) / (4 * eps**2)
    W = np.sqrt(1.0 + np.sum(du**2, axis=-1))
    x = P @ basis + u[..., None] * v
    nu = (v - du @ basis) / W[..., None]
    g_ = np.eye(n) + du[..., :, None] * du[..., None, :]
    b = -d2 / W[..., None, None]
    c = _inv_sqrt(g_)
    S = c @ b @ c
    H = np.trace(S, axis1=-2, axis2=-1)
    normA2 = np.einsum("...ij,...ij->...", S, S)
    return x, nu, W * vol, H, normA2


def ball_cloud(surface: SampledHypersurface, center, radius: float, cells: int = 96,
               max_cells: int = 600_000) -> BallCloud:
    """Resample ``Sigma`` inside ``B_radius(center)`` on a grid about ``cells`` wide across the ball.

    Catalog charts use closed forms and exact cell measures; graph charts use
    the height function or its spline.  Profile charts fall back to the
    coarse samples weighted by the orbit fraction inside the ball.
    """
    center = np.asarray(center, dtype=float)
    ch = surface.chart
    fields = compute_geometry(surface)
    if isinstance(ch, ProfileChart):
        frac = orbit_fraction(surface, center, radius)
        keep = frac > 0
        return BallCloud(x=surface.x[keep], nu=surface.nu[keep], dmu=surface.dmu[keep] * frac[keep],
                         H=fields.H[keep], normA2=fields.normA2[keep], center=center, radius=radius)
    near = np.linalg.norm(ch.grid_x - center, axis=-1) <= radius + 2.5 * _metric_step(ch)
    if not np.any(near):
        raise GeometryError("ball does not meet the sampled surface")
    calc_scale = _axis_scales(ch)
    edges = []
    whole_pole = False
    for ax, kind in enumerate(ch.axes):
        t = ch.params(ax)
        shape = [1] * ch.dim
        shape[ax] = -1
        T = np.broadcast_to(t.reshape(shape), ch.shape)[near]
        h = ch.spacing[ax]
        if kind == "periodic":
            period = h * ch.shape[ax]
            ref = float(T[np.argmin(np.linalg.norm(ch.grid_x[near] - center, axis=-1))])
            rel = (T - ref + 0.5 * period) % period - 0.5 * period
            lo, hi = ref + rel.min() - h, ref + rel.max() + h
            if hi - lo >= period:
                lo, hi = 0.0, period
        else:
            lo, hi = T.min() - h, T.max() + h
            if kind == "pole":
                lo, hi = max(lo, 0.0), min(hi, math.pi)
                whole_pole |= lo <= 0.0 or hi >= math.pi
            else:
                lo = max(lo, ch.origin[ax] - 0.5 * h if ch.graph is None else ch.origin[ax])
                top = ch.origin[ax] + h * (ch.shape[ax] - 1)
                hi = min(hi, top + 0.5 * h if ch.graph is None else top)
        edges.append([lo, hi])
    if whole_pole:
        for ax, kind in enumerate(ch.axes):
            if kind == "periodic":
                edges[ax] = [0.0, ch.spacing[ax] * ch.shape[ax]]
    target = 2.0 * radius / cells
    counts = [max(4, int(math.ceil((e[1] - e[0]) * calc_scale[ax] / target))) for ax, e in enumerate(edges)]
    while np.prod(counts) > max_cells:
        counts = [max(4, int(c * 0.8)) for c in counts]
    grid_edges = [np.linspace(e[0], e[1], c + 1) for e, c in zip(edges, counts)]
    if ch.analytic is not None:
        x, nu, dmu = analytic_cells(ch.analytic, grid_edges)
        f = _grid_fields(_AnalyticOnly(ch, x.shape[:-1]))
        H, normA2 = f["H"], f["normA2"]
    elif ch.graph is not None:
        x, nu, dmu, H, normA2 = _graph_cells(ch, grid_edges)
    else:
        raise GeometryError("surface carries no closed form or interpolant for local resampling")
    x, nu, dmu, H, normA2 = (a.reshape((-1,) + a.shape[len(counts):]) for a in (x, nu, dmu, H, normA2))
    keep = np.linalg.norm(x - center, axis=1) <= radius
    if surface.truncation_radius is not None:
        keep &= np.linalg.norm(x, axis=1) <= surface.truncation_radius
    return BallCloud(x=x[keep], nu=nu[keep], dmu=dmu[keep], H=H[keep], normA2=normA2[keep],
                     center=center, radius=float(radius))


class _AnalyticOnly:
    def __init__(self, chart, shape):
        self.analytic = chart.analytic
        self.shape = tuple(shape)
        self.dim = len(shape)


def _metric_step(ch):
    return max(s * m for s, m in zip(ch.spacing, _axis_scales(ch)))


def _axis_scales(ch):
    scales = getattr(ch, "_axis_scales", None)
    if scales is None:
        scales = []
        for ax in range(ch.dim):
            d = np.linalg.norm(np.diff(ch.grid_x, axis=ax), axis=-1) / ch.spacing[ax]
            scales.append(float(np.max(d)))
        ch._axis_scales = scales
    return scales


def orbit_fraction(surface: SampledHypersurface, center, radius: float) -> np.ndarray:
    """Fraction of each rotational orbit lying in ``B_radius(center)`` (profile charts)."""
    n = surface.n
    center = np.asarray(center, dtype=float)
    r = surface.x[:, 0]
    z = surface.x[:, -1]
    a = float(np.linalg.norm(center[:-1]))
    d2 = radius**2 - (z - center[-1]) ** 2
    out = np.zeros(surface.size)
    ok = d2 >= 0
    # |p - c|^2 = r^2 + a^2 - 2 r a cos(angle) + dz^2 <= radius^2
    with np.errstate(divide="ignore", invalid="ignore"):
        cth = (r**2 + a**2 - d2) / (2.0 * r * a)
    full = ok & ((a == 0) | (r == 0)) & (r**2 + a**2 <= d2)
    part = ok & ~((a == 0) | (r == 0))
    c = np.clip(cth[part], -1.0, 1.0)
    if n == 2:
        frac = np.arccos(c) / math.pi
    elif n == 3:
        frac = (1.0 - c) / 2.0
    else:
        from scipy.special import betainc

        # normalized measure of a spherical cap on S^{n-1} with half-angle arccos(c)
        frac = np.where(c >= 0, 0.5 * betainc(0.5 * (n - 1), 0.5, 1 - c**2),
                        1 - 0.5 * betainc(0.5 * (n - 1), 0.5, 1 - c**2))
    out[part] = frac
    out[full] = 1.0
    return out
