"""Translating solitons: the bowl profile, residuals, the translator operator and spectra.

The translation direction is the last coordinate axis.  On the bowl the
normal points downward so that ``H = -<e_{n+1}, nu> > 0``.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geometry import (_chart_fields, compute_geometry, grid_calculus, interior_mask, orbit_fraction,
                       profile_calculus)
from .reports import make_report
from .stability import (StabilityError, assemble_nodes, solve, translator_weight, _to_samples,
                        _unknowns)
from .surfaces import Bowl, GridChart, ProfileChart, SampledHypersurface, catalog_label, catalog_to_dict


class TranslatorError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class BowlProfile:
    n: int
    r: np.ndarray
    u: np.ndarray
    du: np.ndarray
    step: float

    def csv(self, normA2=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["r", "u", "du", "normA2"])
        a2 = np.full(self.r.size, np.nan) if normA2 is None else normA2
        for row in zip(self.r, self.u, self.du, a2):
            w.writerow([repr(float(v)) for v in row])
        return buf.getvalue()


def _rhs(r, y, n):
    u, p = y
    return np.array([p, (1.0 + p * p) * (1.0 - (n - 1) * p / r)])


def bowl_solve(n: int, r_max: float, step: float):
    """Integrate the rotational translator ODE from the tip and lift it to a hypersurface."""
    if n < 2:
        raise TranslatorError(f"intrinsic dimension must be >= 2 (got {n})")
    if not r_max > 0:
        raise TranslatorError("r_max must be positive")
    if step <= 0 or step > r_max / 100.0 * (1 + 1e-12):
        raise TranslatorError("step must satisfy 0 < step <= r_max / 100")
    count = int(round(r_max / step))
    r = step * np.arange(count + 1)
    u = np.empty_like(r)
    du = np.empty_like(r)
    a, b = 1.0 / (2 * n), 1.0 / (4.0 * n**3 * (n + 2))
    # series start on [0, 2 step]
    for i in range(3):
        u[i] = a * r[i] ** 2 + b * r[i] ** 4
        du[i] = 2 * a * r[i] + 4 * b * r[i] ** 3
    y = np.array([u[2], du[2]])
    for i in range(2, count):
        t = r[i]
        k1 = _rhs(t, y, n)
        k2 = _rhs(t + 0.5 * step, y + 0.5 * step * k1, n)
        k3 = _rhs(t + 0.5 * step, y + 0.5 * step * k2, n)
        k4 = _rhs(t + step, y + step * k3, n)
        y = y + step / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(y)) or abs(y[1]) > 1e8:
            raise TranslatorError(f"slope blow-up at r = {r[i + 1]:.4g}: step too large")
        u[i + 1], du[i + 1] = y
    prof = BowlProfile(n=n, r=r, u=u, du=du, step=float(step))
    return prof, lift_profile(prof)


def lift_profile(prof: BowlProfile) -> SampledHypersurface:
    n, r, u, du, h = prof.n, prof.r, prof.u, prof.du, prof.step
    W = np.sqrt(1.0 + du**2)
    x = np.zeros((r.size, n + 1))
    x[:, 0] = r
    x[:, -1] = u
    nu = np.zeros_like(x)
    nu[:, 0] = du / W
    nu[:, -1] = -1.0 / W
    edges = np.concatenate([[0.0], 0.5 * (r[1:] + r[:-1]), [r[-1]]])
    sphere_area = 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)
    dmu = sphere_area * W * (edges[1:] ** n - edges[:-1] ** n) / n
    boundary = np.zeros(r.size, dtype=bool)
    boundary[-1] = True
    chart = ProfileChart(n=n, r=r, u=u, du=du, step=h, orientation=-1.0)
    cid = Bowl(n)
    recipe = {"catalog": catalog_to_dict(cid), "resolution": h, "r_trunc": float(r[-1]),
              "profile": {"n": n, "r_max": float(r[-1]), "step": h}}
    return SampledHypersurface(n=n, x=x, nu=nu, dmu=dmu, boundary=boundary, source=catalog_label(cid),
                               chart=chart, index=np.arange(r.size), truncation_radius=float(r[-1]),
                               recipe=recipe)


def profile_of(surface: SampledHypersurface) -> BowlProfile:
    ch = surface.chart
    if not isinstance(ch, ProfileChart):
        raise TranslatorError("surface is not rotational")
    return BowlProfile(n=ch.n, r=ch.r, u=ch.u, du=ch.du, step=ch.step)


def translator_residual(surface: SampledHypersurface, fields=None):
    """Per-sample ``H + <e_{n+1}, nu>`` and its sup over non-boundary samples."""
    if fields is None:
        fields = compute_geometry(surface)
    res = fields.H + surface.nu[:, -1]
    mask = ~surface.boundary
    return {"residual": res, "sup": float(np.max(np.abs(res[mask])))}


def _translator_op_grid(surface, grid):
    ch = surface.chart
    a2 = _chart_fields(ch)["normA2"]
    if isinstance(ch, GridChart):
        calc = grid_calculus(ch)
        e = np.zeros(surface.n + 1)
        e[-1] = 1.0
        return calc.laplacian(grid) + calc.directional(grid, e) + a2 * grid
    calc = profile_calculus(ch)
    return calc.laplacian(grid) + calc.dot_axis(grid) + a2 * grid


def translator_apply(surface: SampledHypersurface, values) -> np.ndarray:
    from .stability import _grid_values

    return _to_samples(surface, _translator_op_grid(surface, _grid_values(surface, values)))


def translator_simons_residual(surface: SampledHypersurface, r_range=None, depth: int = 2):
    """sup |T|A|^2 - 2|grad A|^2 + |A|^4| with ``T`` the translator stability operator.

    ``r_range`` restricts the sup to samples whose distance from the axis lies
    in the given interval.  The tip sample uses a reflected stencil and is
    flagged lower accuracy.
    """
    f = _chart_fields(surface.chart)
    a2 = f["normA2"]
    res = np.abs(_to_samples(surface, _translator_op_grid(surface, a2) - 2.0 * f["gradA2"] + a2**2))
    mask = interior_mask(surface, depth)
    if r_range is not None:
        rr = np.linalg.norm(surface.x[:, :-1], axis=1)
        mask &= (rr >= r_range[0]) & (rr <= r_range[1])
    out = {"sup": float(np.max(res[mask])), "residual": res}
    if isinstance(surface.chart, ProfileChart):
        tip = surface.index == 0
        out["tip"] = float(res[tip][0]) if np.any(tip) else None
        out["tip_lower_accuracy"] = True
    return out


def translator_first_eigenvalue(surface: SampledHypersurface, R: float, m: int = 1, potential_scale: float = 1.0):
    """Least eigenvalues of minus the translator operator, Dirichlet outside the region.

    For rotational surfaces the region is ``r <= R`` (distance from the axis);
    otherwise ``|x| <= R``.
    """
    if isinstance(surface.chart, ProfileChart):
        idx = surface.index
        inside = surface.x[:, 0] <= R + 1e-12
        if not np.any(inside):
            raise StabilityError("empty region")
        last = idx[inside].max()
        nodes = idx[inside & (idx < last) & ~surface.boundary]
    else:
        nodes = _unknowns(surface, R)
    mats = assemble_nodes(surface, nodes, translator_weight, lambda a2: potential_scale * a2, "translator", R=R)
    return solve(mats, m)


def volume_ratio_sup(surface: SampledHypersurface, radii=(0.5, 1.0, 2.0, 4.0), centres: int = 12):
    """sup over a grid of sampled centres and radii of vol(B_r(x) cap Sigma) / r^n."""
    n = surface.n
    reach = surface.truncation_radius
    cand = np.linspace(0, surface.size - 1, centres).astype(int)
    best = 0.0
    for i in cand:
        c = surface.x[i]
        for rad in radii:
            if reach is not None and np.linalg.norm(c[:-1]) + rad > reach:
                continue
            if isinstance(surface.chart, ProfileChart):
                vol = float(np.sum(surface.dmu * orbit_fraction(surface, c, rad)))
            else:
                vol = float(np.sum(surface.dmu[np.linalg.norm(surface.x - c, axis=1) <= rad]))
            best = max(best, vol / rad**n)
    return best


def translator_curvature_report(surface: SampledHypersurface, lambda0: Optional[float] = None):
    """Measurement report: sup |A|, where it is attained and the volume-ratio sup."""
    fields = compute_geometry(surface)
    mask = ~surface.boundary
    a2 = fields.normA2[mask]
    k = int(np.argmax(a2))
    at = np.flatnonzero(mask)[k]
    tip = bool(isinstance(surface.chart, ProfileChart) and surface.index[at] == 0)
    ratio = volume_ratio_sup(surface)
    w = np.exp(surface.x[:, -1])
    bound = math.inf if lambda0 is None else float(lambda0)
    return make_report(
        "translator_curvature", ratio, bound, hypothesis_status="measured", operator="translator",
        params={"lambda0": lambda0, "n": surface.n},
        notes=["measurement only: the curvature bound's constant is existential",
               "lhs is the measured volume-ratio sup, rhs the supplied lambda0"],
        extra={"sup_normA2": float(a2[k]), "sup_normA": float(math.sqrt(a2[k])), "attained_at_tip": tip,
               "argmax_x": surface.x[at].tolist(), "weight_range": [float(w.min()), float(w.max())]},
        require_hypothesis=False,
    )
