"""Gaussian-weighted integrals, the F-functional, entropy and volume growth."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import minimize

from .reports import Constant, FunctionalValue, make_report
from .surfaces import SampledHypersurface

FLAT_EIG = 1e-8


class GaussianError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class GaussianWeight:
    center: np.ndarray
    scale: float
    values: np.ndarray
    n: int = 2

    @property
    def normalizer(self):
        return normalizer(self.n, self.scale)

    @classmethod
    def on(cls, surface: SampledHypersurface, center=None, scale: float = 1.0) -> "GaussianWeight":
        if not scale > 0:
            raise GaussianError("scale t0 must be positive")
        c = np.zeros(surface.n + 1) if center is None else np.asarray(center, dtype=float)
        vals = np.exp(-np.sum((surface.x - c) ** 2, axis=1) / (4.0 * scale))
        return cls(center=c, scale=float(scale), values=vals, n=surface.n)


def normalizer(n: int, t0: float) -> float:
    return (4.0 * math.pi * t0) ** (-n / 2.0)


def volume_constant(n: int, lambda0: float) -> float:
    """Constant of the polynomial volume bound vol(B_r(p)) <= C r^n."""
    return math.exp(-0.25) * (4.0 * math.pi) ** (n / 2.0) * lambda0


def tail_bound(surface: SampledHypersurface, weight: GaussianWeight, lambda0: Optional[float]) -> float:
    """Bound on the weighted mass of Sigma outside the sampled ball, from dyadic annuli."""
    Rt = surface.truncation_radius
    if Rt is None:
        return 0.0
    if lambda0 is None:
        raise GaussianError("noncompact surface: an entropy bound lambda0 is required for the tail bound")
    d = Rt - float(np.linalg.norm(weight.center))
    if d <= 0:
        return math.inf
    C = volume_constant(surface.n, lambda0)
    total = 0.0
    j = 0
    while True:
        inner = d * 2.0**j
        term = C * (2.0 * inner) ** surface.n * math.exp(-inner**2 / (4.0 * weight.scale))
        total += term
        if term < 1e-300 or (j > 3 and term < 1e-18 * max(total, 1e-300)):
            break
        j += 1
    return total


def weighted_integral(surface: SampledHypersurface, values, weight: GaussianWeight,
                      lambda0: Optional[float] = None) -> FunctionalValue:
    values = np.asarray(values, dtype=float)
    if values.shape != (surface.size,):
        raise GaussianError("field must have one value per sample")
    value = float(np.sum(values * weight.values * surface.dmu))
    tb = tail_bound(surface, weight, lambda0)
    return FunctionalValue(value=value, truncation_tail_bound=tb, region_radius=surface.truncation_radius,
                           params={"x0": weight.center.tolist(), "t0": weight.scale, "lambda0": lambda0},
                           name="weighted_integral")


def f_functional(surface: SampledHypersurface, x0=None, t0: float = 1.0,
                 lambda0: Optional[float] = None) -> FunctionalValue:
    if not t0 > 0:
        raise GaussianError("t0 must be positive")
    w = GaussianWeight.on(surface, x0, t0)
    norm = w.normalizer
    if lambda0 is None and not surface.is_compact:
        # uncertified tail
        raw = FunctionalValue(float(np.sum(w.values * surface.dmu)), math.inf, surface.truncation_radius)
    else:
        raw = weighted_integral(surface, np.ones(surface.size), w, lambda0)
    return FunctionalValue(value=norm * raw.value, truncation_tail_bound=norm * raw.truncation_tail_bound,
                           region_radius=surface.truncation_radius,
                           params={"x0": w.center.tolist(), "t0": float(t0), "lambda0": lambda0}, name="F")


def _f_value(x, dmu, n, x0, t0):
    return normalizer(n, t0) * float(np.sum(np.exp(-np.sum((x - x0) ** 2, axis=1) / (4.0 * t0)) * dmu))


@dataclass(frozen=True)
class EntropyResult:
    value: float
    x0: np.ndarray
    t0: float
    flat_directions: int
    converged: bool
    tail_bound: float
    search_box: tuple
    iterations: int

    @property
    def degenerate(self):
        return self.flat_directions > 0

    def to_dict(self):
        return {"schema": "functional.v1", "name": "entropy", "value": self.value, "tail_bound": self.tail_bound,
                "params": {"x0": [float(v) for v in self.x0], "t0": self.t0,
                           "flat_directions": self.flat_directions, "converged": self.converged,
                           "search_box": [list(map(float, b)) for b in self.search_box],
                           "iterations": self.iterations},
                "pass": None}


def entropy(surface: SampledHypersurface, lambda0_hint: Optional[float] = None, grid: int = 5, t_grid: int = 9,
            maxiter: int = 4000, xatol: float = 1e-6) -> EntropyResult:
    """Supremum of the F-functional over centres and scales (grid search then Nelder-Mead)."""
    if not surface.is_compact and lambda0_hint is None:
        raise GaussianError("truncated surface: supply lambda0_hint so the tail bound can be certified")
    x, dmu, n = surface.x, surface.dmu, surface.n
    lo, hi = x.min(axis=0), x.max(axis=0)
    mid = 0.5 * (lo + hi)
    half = np.maximum(hi - lo, 2.0)
    box = tuple(zip(mid - half, mid + half))
    axes = [np.linspace(a, b, grid) for a, b in box]
    logs = np.linspace(-4.0, 4.0, t_grid)
    best, best_p = -math.inf, None
    for pt in itertools.product(*axes):
        p = np.array(pt)
        d2 = np.sum((x - p) ** 2, axis=1)
        for lt in logs:
            t0 = math.exp(lt)
            v = normalizer(n, t0) * float(np.sum(np.exp(-d2 / (4.0 * t0)) * dmu))
            if v > best:
                best, best_p = v, np.append(p, lt)

    def obj(z):
        return -_f_value(x, dmu, n, z[:-1], math.exp(z[-1]))

    res = minimize(obj, best_p, method="Nelder-Mead",
                   options={"xatol": xatol, "fatol": 1e-13, "maxiter": maxiter, "maxfev": 2 * maxiter,
                            "initial_simplex": best_p + np.vstack([np.zeros(best_p.size),
                                                                   0.25 * np.eye(best_p.size)])})
    z = res.x if -res.fun >= best else best_p
    value = max(-res.fun, best)
    flat = _flat_directions(obj, z)
    w = GaussianWeight(center=z[:-1], scale=math.exp(z[-1]), values=np.empty(0), n=n)
    tb = normalizer(n, w.scale) * tail_bound(surface, w, lambda0_hint) if not surface.is_compact else 0.0
    return EntropyResult(value=float(value), x0=z[:-1].copy(), t0=float(math.exp(z[-1])), flat_directions=flat,
                         converged=bool(res.success), tail_bound=float(tb), search_box=box + ((-4.0, 4.0),),
                         iterations=int(res.nit))


def _flat_directions(obj, z, step=0.05):
    m = z.size
    H = np.empty((m, m))
    f0 = obj(z)
    E = np.eye(m) * step
    for i in range(m):
        for j in range(i, m):
            if i == j:
                H[i, i] = (obj(z + E[i]) - 2 * f0 + obj(z - E[i])) / step**2
            else:
                H[i, j] = H[j, i] = (obj(z + E[i] + E[j]) - obj(z + E[i] - E[j]) - obj(z - E[i] + E[j])
                                     + obj(z - E[i] - E[j])) / (4 * step**2)
    return int(np.sum(np.abs(np.linalg.eigvalsh(H)) < FLAT_EIG))


def volume_growth_certificate(surface: SampledHypersurface, p, r: float, lambda0: float):
    """Check vol(B_r(p) cap Sigma) <= e^{-1/4} (4 pi)^{n/2} lambda0 r^n."""
    if not r > 0:
        raise GaussianError("radius must be positive")
    from .geometry import GeometryError, ball_cloud
    from .surfaces import SurfaceError

    p = np.asarray(p, dtype=float)
    try:
        cloud = ball_cloud(surface, p, r)
        lhs = float(np.sum(cloud.dmu))
        method = "local resampling"
    except (GeometryError, SurfaceError):
        lhs = float(np.sum(surface.dmu[np.linalg.norm(surface.x - p, axis=1) <= r]))
        method = "sample sum"
    n = surface.n
    C = Constant(volume_constant(n, lambda0), "exp(-0.25) * (4*pi)**(n/2) * lambda0")
    rhs = C.value * r**n
    notes = [f"LHS by {method}"]
    if surface.truncation_radius is not None and np.linalg.norm(p) + r > surface.truncation_radius:
        notes.append("ball extends beyond the sampled region: LHS is a lower estimate")
    return make_report("volume_growth", lhs, rhs, constants={"C_vol": C},
                       params={"n": n, "lambda0": float(lambda0), "r": float(r), "p": p.tolist()}, notes=notes,
                       hypothesis_status="caller-asserted")
