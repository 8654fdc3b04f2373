"""Certificates for the integral, mean-value and small-energy curvature estimates.

Every constant is built from the entropy bound ``lambda0`` through the volume
bound ``vol(B_r(p) cap Sigma) <= V0 r^n`` with ``V0 = e^{-1/4} (4 pi)^{n/2} lambda0``
and carries a formula string that reproduces it from the report parameters.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import linprog
from scipy.special import gamma

from .gaussian import volume_constant
from .geometry import (GeometryError, ball_cloud, compute_geometry, grid_calculus, interior_mask,
                       linear_growth_constant, profile_calculus, _chart_fields)
from .reports import Constant, EstimateReport, make_report
from .stability import (TOL_DISC, StabilityError, _to_samples, first_eigenvalue,
                        gaussian_weight, translator_weight)
from .surfaces import GridChart, SampledHypersurface, SurfaceError

SIGMA_GRID = 32
RING_MIN = 4
MONOTONE_TOL = 1e-8
MAX_DIM = 6

V0_FORMULA = "exp(-0.25) * (4*pi)**(n/2) * lambda0"


class EstimateError(ValueError):
    pass


def omega(n: int) -> float:
    """Volume of the unit ball in R^n."""
    return math.pi ** (n / 2.0) / gamma(n / 2.0 + 1.0)


def theta(x0) -> float:
    r = float(np.linalg.norm(x0))
    return 1.0 if r <= 1.0 else 1.0 / r


def _check_dim(surface):
    if surface.n > MAX_DIM:
        raise EstimateError(f"estimates are only claimed for n <= {MAX_DIM}")


def _tangential_factor(surface_x, nu, center):
    # |P (x - c)| / |x - c| for the tangential projection P
    d = surface_x - center
    r = np.linalg.norm(d, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        c = np.einsum("ij,ij->i", d, nu) / r
    return r, np.sqrt(np.clip(1.0 - np.nan_to_num(c) ** 2, 0.0, 1.0))


# ---------------------------------------------------------------------------
# cutoffs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LinearAnnulus:
    """1 on ``B_{R-a}(center)``, 0 outside ``B_R(center)``, linear in between."""

    R: float
    a: float
    center: tuple = ()

    def __post_init__(self):
        if not (self.a > 0 and self.R > self.a):
            raise EstimateError("need 0 < a < R")

    @property
    def support_radius(self):
        return self.R

    @property
    def slope_bound(self):
        return 2.0 / self.a

    def profile(self, r):
        return np.clip((self.R - r) / self.a, 0.0, 1.0)

    def slope(self, r):
        return np.where((r > self.R - self.a) & (r < self.R), 1.0 / self.a, 0.0)


@dataclass(frozen=True)
class Logarithmic:
    """1 for ``r <= e^{-k} r0``, ``(log r0 - log r) / k`` up to ``r0``, then 0."""

    r0: float
    k: int
    center: tuple = ()

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 2:
            raise EstimateError("k must be an integer >= 2")
        if not self.r0 > 0:
            raise EstimateError("r0 must be positive")

    @property
    def support_radius(self):
        return self.r0

    @property
    def inner(self):
        return math.exp(-self.k) * self.r0

    def profile(self, r):
        with np.errstate(divide="ignore"):
            mid = (math.log(self.r0) - np.log(np.maximum(r, 1e-300))) / self.k
        return np.where(r <= self.inner, 1.0, np.where(r <= self.r0, mid, 0.0))

    def slope(self, r):
        with np.errstate(divide="ignore"):
            return np.where((r > self.inner) & (r < self.r0), 1.0 / (self.k * np.maximum(r, 1e-300)), 0.0)

    def slope_bound_at(self, r):
        with np.errstate(divide="ignore"):
            return 1.0 / (self.k * r)


@dataclass(frozen=True)
class CustomRadial:
    """Piecewise linear radial profile through ``(radii[i], values[i])``; zero past the last radius."""

    radii: tuple
    values: tuple
    center: tuple = ()

    def __post_init__(self):
        r = np.asarray(self.radii, dtype=float)
        if r.size < 2 or np.any(np.diff(r) <= 0) or r[0] < 0:
            raise EstimateError("radii must be nonnegative and strictly increasing")
        if len(self.values) != r.size or abs(self.values[-1]) > 0:
            raise EstimateError("values must match radii and end at 0")

    @property
    def support_radius(self):
        return float(self.radii[-1])

    def profile(self, r):
        return np.interp(r, self.radii, self.values, right=0.0)

    def slope(self, r):
        rr, vv = np.asarray(self.radii, float), np.asarray(self.values, float)
        s = np.abs(np.diff(vv) / np.diff(rr))
        j = np.clip(np.searchsorted(rr, r, side="right") - 1, 0, s.size - 1)
        return np.where((r >= rr[0]) & (r < rr[-1]), s[j], 0.0)


@dataclass(frozen=True, eq=False)
class BoundCutoff:
    """A cutoff evaluated on a set of points: values and tangential gradient norms."""

    cutoff: object
    center: np.ndarray
    values: np.ndarray
    grad_norm: np.ndarray
    dist: np.ndarray


def bind(cutoff, x, nu, center=None) -> BoundCutoff:
    c = np.asarray(center if center is not None else (cutoff.center or np.zeros(x.shape[1])), dtype=float)
    r, tan = _tangential_factor(x, nu, c)
    return BoundCutoff(cutoff=cutoff, center=c, values=cutoff.profile(r), grad_norm=cutoff.slope(r) * tan, dist=r)


def random_annulus_cutoffs(surface: SampledHypersurface, R: float, count: int = 20, seed: int = 0):
    """Seeded linear-annulus cutoffs centred at samples, each supported in ``B_R``."""
    rng = np.random.default_rng(seed)
    radius = surface.radius
    pool = np.flatnonzero((radius <= 0.5 * R) & ~surface.boundary)
    if pool.size == 0:
        raise EstimateError("no samples inside B_{R/2} to centre cutoffs")
    out = []
    for _ in range(count):
        c = surface.x[rng.choice(pool)]
        room = R - float(np.linalg.norm(c))
        outer = rng.uniform(0.5, 1.0) * room
        a = rng.uniform(0.2, 0.8) * outer
        out.append(LinearAnnulus(R=float(outer), a=float(a), center=tuple(float(t) for t in c)))
    return out


# ---------------------------------------------------------------------------
# stability hypothesis
# ---------------------------------------------------------------------------

def graphical_direction(surface: SampledHypersurface, R: float):
    """Direction ``v`` maximizing ``min <v, nu>`` over samples in ``B_R`` (linear program), or None."""
    nu = surface.nu[surface.radius <= R]
    if nu.shape[0] == 0:
        return None
    m = nu.shape[1]
    # variables (v, t): maximize t subject to <v, nu_i> >= t, |v_j| <= 1
    c = np.zeros(m + 1)
    c[-1] = -1.0
    A = np.hstack([-nu, np.ones((nu.shape[0], 1))])
    res = linprog(c, A_ub=A, b_ub=np.zeros(nu.shape[0]), bounds=[(-1, 1)] * m + [(None, 1)], method="highs")
    if res.status != 0 or res.x[-1] <= 1e-12:
        return None
    return res.x[:-1] / np.linalg.norm(res.x[:-1])


def half_stability_status(surface: SampledHypersurface, R: float) -> tuple:
    """Return ``(status, note)`` for 1/2-stability of ``Sigma`` in ``B_R``.

    Graphical regions are 1/2-stable outright; otherwise the first Dirichlet
    eigenvalue of ``-L`` decides within the discretization tolerance.
    """
    v = graphical_direction(surface, R)
    if v is not None:
        return "holds", f"graphical in B_R along v = {np.round(v, 6).tolist()}"
    try:
        lam = first_eigenvalue(surface, R).first
    except (StabilityError, GeometryError, SurfaceError) as exc:
        return "unknown", f"not graphical and eigenvalue unavailable: {exc}"
    if lam >= -0.5 - TOL_DISC:
        return "holds", f"first eigenvalue of -L on B_R is {lam:.6g} >= -1/2 - {TOL_DISC}"
    return "not 1/2-stable", f"first eigenvalue of -L on B_R is {lam:.6g} < -1/2"


# ---------------------------------------------------------------------------
# integral decay and the bootstrap
# ---------------------------------------------------------------------------

def _prop31_constant(n, lambda0, a):
    C = Constant((4.0 / a**2) * volume_constant(n, lambda0) * math.exp(3.0 * a**2 / 4.0),
                 f"(4/a**2) * {V0_FORMULA} * exp(3*a**2/4)")
    return C


def _curvature_energy(surface, fields, R, power=1.0):
    """Integral of ``|A|^{2 power}`` over ``B_R``: local resampling, else the sample sum."""
    try:
        cloud = ball_cloud(surface, np.zeros(surface.n + 1), R)
        return cloud.integrate(cloud.normA2**power)
    except GeometryError:
        inside = surface.radius <= R
        return float(np.sum(fields.normA2[inside] ** power * surface.dmu[inside]))


def _covers(surface, R):
    t = surface.truncation_radius
    if t is not None and t < R - 1e-12:
        return False
    return True


def integral_curvature_decay(surface: SampledHypersurface, R: float, lambda0: float, a: float = 0.5,
                             hypothesis: Optional[str] = None) -> EstimateReport:
    """Integral of ``|A|^2`` over ``B_{R-2a}`` against ``C R^n e^{-aR/2}``."""
    if not R > 1:
        raise EstimateError("R must exceed 1")
    if not 0 < a < R / 2:
        raise EstimateError("need 0 < a < R/2")
    _check_dim(surface)
    n = surface.n
    fields = compute_geometry(surface)
    lhs = _curvature_energy(surface, fields, R - 2 * a)
    C = _prop31_constant(n, lambda0, a)
    rhs = C.value * R**n * math.exp(-a * R / 2.0)
    notes = []
    if hypothesis is None:
        status, why = half_stability_status(surface, R)
        notes.append(why)
    else:
        status = hypothesis
    if not _covers(surface, R):
        notes.append("surface is sampled only inside a smaller ball than B_R")
    return make_report("integral_curvature_decay", lhs, rhs, hypothesis_status=status, constants={"C": C},
                       params={"n": n, "lambda0": float(lambda0), "a": float(a), "R": float(R)}, notes=notes)


@dataclass(frozen=True, eq=False)
class MeanValueTrace:
    center: np.ndarray
    radii: np.ndarray
    g: np.ndarray
    h: np.ndarray
    R: float
    C_meas: float
    C_prime: float

    @property
    def monotone(self) -> bool:
        return bool(np.all(np.diff(self.h) >= -MONOTONE_TOL))

    def csv(self) -> str:
        rows = ["s,g,h"] + [f"{s!r},{g!r},{h!r}" for s, g, h in zip(self.radii.tolist(), self.g.tolist(),
                                                                     self.h.tolist())]
        return "\n".join(rows) + "\n"

    def to_dict(self):
        return {"center": self.center.tolist(), "radii": self.radii.tolist(), "g": self.g.tolist(),
                "h": self.h.tolist(), "R": self.R, "C_meas": self.C_meas, "C_prime": self.C_prime,
                "monotone": self.monotone}


def rim_distance(surface: SampledHypersurface, x0) -> float:
    x0 = np.asarray(x0, dtype=float)
    d = math.inf
    if np.any(surface.boundary):
        d = float(np.min(np.linalg.norm(surface.x[surface.boundary] - x0, axis=1)))
    if surface.truncation_radius is not None:
        d = min(d, surface.truncation_radius - float(np.linalg.norm(x0)))
    return d


def _on_surface(surface, x0, tol=None):
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (surface.n + 1,):
        raise EstimateError(f"x0 must have {surface.n + 1} coordinates")
    d = np.linalg.norm(surface.x - x0, axis=1)
    j = int(np.argmin(d))
    tol = 2.0 * surface.chart.h if tol is None else tol
    if d[j] > tol:
        raise EstimateError(f"x0 is {d[j]:.3g} away from the nearest sample")
    return x0, j


def mean_value_monotonicity(surface: SampledHypersurface, x0, R: Optional[float] = None,
                            s_max: Optional[float] = None, count: int = 16, cells: int = 96) -> MeanValueTrace:
    """Trace of ``g(s) exp(C' R^2 s^2 + R s / 2)`` with ``g(s) = s^{-n} int_{B_s(x0)} |A|^2``."""
    _check_dim(surface)
    x0, _ = _on_surface(surface, x0)
    r0 = float(np.linalg.norm(x0))
    R = r0 + 2.0 if R is None else float(R)
    if r0 > R - 2 + 1e-12:
        raise EstimateError("x0 must lie in B_{R-2}")
    rim = rim_distance(surface, x0)
    top = min(1.0, rim)
    s_max = top if s_max is None else float(s_max)
    if not 0 < s_max <= top + 1e-12:
        raise EstimateError(f"s_max must lie in (0, {top:.6g}]")
    fields = compute_geometry(surface)
    C_meas = linear_growth_constant(surface, R, fields)
    # (1/8)|x|^2 + 2 C^2 (1+|x|)^2 <= C' R^2 on B_{R-1}
    C_prime = 0.125 + 2.0 * C_meas**2
    n = surface.n
    radii = s_max * np.arange(1, count + 1) / count
    big = ball_cloud(surface, x0, s_max, cells=cells)
    if big.x.shape[0] < 20:
        raise EstimateError("fewer than 20 samples inside B_{s_max}(x0)")
    g = np.empty(count)
    for i, s in enumerate(radii):
        cloud = ball_cloud(surface, x0, s, cells=cells)
        g[i] = cloud.integrate(cloud.normA2) / s**n
    h = g * np.exp(C_prime * R**2 * radii**2 + 0.5 * R * radii)
    return MeanValueTrace(center=x0, radii=radii, g=g, h=h, R=R, C_meas=C_meas, C_prime=C_prime)


def bootstrap_pointwise_bound(surface: SampledHypersurface, x0, R: float, lambda0: float,
                              hypothesis: Optional[str] = None) -> EstimateReport:
    """``|A|^2(x0) <= e^{C'+1/2} / omega_n R^n`` times the integral-decay bound at ``R``."""
    if not R >= 1:
        raise EstimateError("R must be at least 1 so that s = 1/R <= 1")
    _check_dim(surface)
    x0, j = _on_surface(surface, x0)
    if np.linalg.norm(x0) > R - 2 + 1e-12:
        raise EstimateError("x0 must lie in B_{R-2}")
    n = surface.n
    fields = compute_geometry(surface)
    C_meas = linear_growth_constant(surface, R, fields)
    decay = integral_curvature_decay(surface, R, lambda0, 0.5, hypothesis=hypothesis)
    mean = Constant(math.exp(0.125 + 2.0 * C_meas**2 + 0.5) / omega(n),
                    "exp(0.125 + 2*C_meas**2 + 0.5) / (pi**(n/2) / math.gamma(n/2 + 1))")
    C31 = decay.constants["C"]
    rhs = mean.value * R**n * decay.rhs
    lhs = float(fields.normA2[j])
    cloud = ball_cloud(surface, x0, 1.0 / R)
    local = cloud.integrate(cloud.normA2)
    notes = list(decay.notes)
    if decay.hypothesis_status != "holds":
        notes.append("not applicable: the 1/2-stability hypothesis is not established")
    return make_report("bootstrap_pointwise_bound", lhs, rhs, hypothesis_status=decay.hypothesis_status,
                       constants={"C_mean": mean, "C": C31},
                       params={"n": n, "lambda0": float(lambda0), "a": 0.5, "R": float(R), "x0": x0.tolist(),
                               "C_meas": C_meas},
                       notes=notes,
                       extra={"mean_value_step": {"lhs": lhs, "rhs": mean.value * R**n * local},
                              "integral_decay": {"lhs": decay.lhs, "rhs": decay.rhs}})


# ---------------------------------------------------------------------------
# Simons-type inequality
# ---------------------------------------------------------------------------

def _laplacian(surface, values_grid):
    ch = surface.chart
    if isinstance(ch, GridChart):
        return grid_calculus(ch).laplacian(values_grid)
    return profile_calculus(ch).laplacian(values_grid)


def simons_inequality_check(surface: SampledHypersurface, tol: float = 1e-8, depth: int = 2) -> EstimateReport:
    """Pointwise ``Delta |A|^2 >= -|x|^2 |A|^2 / 8 + |A|^2 - 2 |A|^4`` at interior samples.

    The report's ``lhs`` is the largest violation ``rhs - Delta |A|^2`` and its
    ``rhs`` the tolerance.
    """
    f = _chart_fields(surface.chart)
    a2g = f["normA2"]
    lap = _to_samples(surface, _laplacian(surface, a2g))
    a2 = _to_samples(surface, a2g)
    r2 = surface.radius**2
    bound = -0.125 * r2 * a2 + a2 - 2.0 * a2**2
    mask = interior_mask(surface, depth)
    gap = (bound - lap)[mask]
    worst = float(np.max(gap)) if gap.size else -math.inf
    return make_report("simons_inequality", worst, tol, hypothesis_status="not required",
                       params={"n": surface.n, "tol": tol, "depth": depth},
                       notes=[f"{int(mask.sum())} interior samples checked"],
                       extra={"min_laplacian": float(np.min(lap[mask])) if gap.size else None})


# ---------------------------------------------------------------------------
# small energy: Choi-Schoen
# ---------------------------------------------------------------------------

def choi_schoen_epsilon(n: int) -> float:
    return omega(n) * 2.0 ** (-n) * math.exp(-2 * n)


def choi_schoen(surface: SampledHypersurface, x0, r0: float, eps: Optional[float] = None,
                sigmas: int = SIGMA_GRID, cells: int = 96) -> EstimateReport:
    """If ``int_{B_r0(x0)} |A|^n < eps`` then ``sigma^2 |A|^2(y) <= 1`` on ``B_{r0 - sigma}(x0)``."""
    _check_dim(surface)
    x0 = np.asarray(x0, dtype=float)
    th = theta(x0)
    if not 0 < r0 <= th + 1e-12:
        raise EstimateError(f"r0 must lie in (0, theta] with theta = {th:.6g}")
    if rim_distance(surface, x0) < r0:
        raise EstimateError("surface does not cover B_r0(x0)")
    n = surface.n
    eps_c = Constant(choi_schoen_epsilon(n), "(pi**(n/2) / math.gamma(n/2 + 1)) * 2**(-n) * exp(-2*n)")
    if eps is not None:
        eps_c = Constant(float(eps), "eps", provenance="CALLER")
    cloud = ball_cloud(surface, x0, r0, cells=cells)
    if cloud.x.shape[0] < 20:
        raise EstimateError("insufficient coverage of B_r0(x0)")
    E = cloud.integrate(cloud.normA2 ** (n / 2.0))
    grid = r0 * np.arange(1, sigmas + 1) / sigmas
    dist = cloud.dist
    worst = 0.0
    for s in grid:
        sel = dist <= r0 - s
        if np.any(sel):
            worst = max(worst, float(s**2 * np.max(cloud.normA2[sel])))
    status = "holds" if E < eps_c.value else "fails"
    notes = [f"energy {E:.6g} vs threshold {eps_c.value:.6g}"]
    if status == "fails":
        notes.append("hypothesis fails: small-energy condition not met, theorem not applicable")
        if worst <= 1.0:
            notes.append("conclusion sigma^2 |A|^2 <= 1 nevertheless holds on the sampled grid")
    params = {"n": n, "x0": x0.tolist(), "r0": float(r0), "theta": th, "sigmas": sigmas}
    if eps is not None:
        params["eps"] = float(eps)
    return make_report("choi_schoen", worst, 1.0, hypothesis_status=status, constants={"eps": eps_c},
                       params=params, notes=notes, extra={"energy": E})


# ---------------------------------------------------------------------------
# SSY
# ---------------------------------------------------------------------------

def ssy_default_a(n: int, q: float) -> float:
    return (math.sqrt(2.0 / (n + 1)) - q) / 2.0


def ssy_constant(n: int, q: float, a: Optional[float] = None) -> Constant:
    a = ssy_default_a(n, q) if a is None else a
    if not a > 0:
        raise EstimateError("a must be positive")
    D = 2.0 / (n + 1) - q**2 - a * q
    if not D > 0:
        raise EstimateError(f"D = 2/(n+1) - q^2 - a q = {D:.6g} must be positive")
    value = max(2.0 + 2.0 * (1 + q) ** 2 * (1 + q / a) / D, n * (1 + q) ** 2 / ((n + 1) * D))
    formula = ("max(2 + 2*(1 + q)**2*(1 + q/a)/(2/(n + 1) - q**2 - a*q), "
               "n*(1 + q)**2/((n + 1)*(2/(n + 1) - q**2 - a*q)))")
    return Constant(value, formula)


def ssy_inequality(surface: SampledHypersurface, cutoff, q: float, a: Optional[float] = None, R: float = None,
                   operator: str = "shrinker", hypothesis: str = "caller-asserted") -> EstimateReport:
    """``int |A|^{4+2q} phi^2 w <= C (int |A|^{2+2q} |grad phi|^2 w + K int |A|^{2+2q} phi^2 w)``.

    For shrinkers ``w = e^{-|x|^2/4}`` and ``K = R^2``; for translators
    ``w = e^{x_{n+1}}`` and ``K = 4``.
    """
    _check_dim(surface)
    n = surface.n
    if not 0 <= q < math.sqrt(2.0 / (n + 1)):
        raise EstimateError("q must lie in [0, sqrt(2/(n+1)))")
    a = ssy_default_a(n, q) if a is None else float(a)
    C = ssy_constant(n, q, a)
    center = np.asarray(cutoff.center if cutoff.center else np.zeros(n + 1), dtype=float)
    if R is None:
        raise EstimateError("R is required")
    if np.linalg.norm(center) + cutoff.support_radius > R + 1e-12:
        raise EstimateError("cutoff is not supported in B_R")
    if not _covers(surface, R) or rim_distance(surface, center) < cutoff.support_radius:
        raise EstimateError("cutoff support leaves the sampled region")
    fields = compute_geometry(surface)
    bc = bind(cutoff, surface.x, surface.nu, center)
    if operator == "shrinker":
        w = gaussian_weight(surface.x)
        K = Constant(float(R) ** 2, "R**2")
    elif operator == "translator":
        w = translator_weight(surface.x)
        K = Constant(4.0, "4.0")
    else:
        raise EstimateError(f"unknown operator {operator!r}")
    A = np.sqrt(fields.normA2)
    wd = w * surface.dmu
    lhs = float(np.sum(A ** (4 + 2 * q) * bc.values**2 * wd))
    grad_term = float(np.sum(A ** (2 + 2 * q) * bc.grad_norm**2 * wd))
    mass_term = float(np.sum(A ** (2 + 2 * q) * bc.values**2 * wd))
    rhs = C.value * (grad_term + K.value * mass_term)
    return make_report("ssy", lhs, rhs, hypothesis_status=hypothesis, constants={"C": C, "K": K},
                       params={"n": n, "q": float(q), "a": a, "R": float(R)}, operator=operator,
                       notes=["1/2-stability is the caller's responsibility"] if hypothesis == "caller-asserted" else [],
                       extra={"cutoff": _cutoff_dict(cutoff), "grad_term": grad_term, "mass_term": mass_term})


def _cutoff_dict(c):
    d = {"kind": type(c).__name__}
    d.update({k: (list(v) if isinstance(v, tuple) else v) for k, v in c.__dict__.items()})
    return d


# ---------------------------------------------------------------------------
# scale-invariant energies
# ---------------------------------------------------------------------------

def _ratio_formula(mult):
    # sup/inf of e^{-|x|^2/4} over B_{mult r}(x0)
    return f"exp(((x0n + {mult}*r)**2 - max(x0n - {mult}*r, 0)**2)/4)"


def lemma43_constants(n: int, lambda0: float, r: float, x0n: float) -> dict:
    """Constants ``C_2, C_4`` with ``int_{B_r} |A|^p <= C_p r^{n-p}`` for ``p = 2, 4``."""
    env = {"n": n, "lambda0": lambda0, "r": r, "x0n": x0n}
    c2f = f"4*e*{V0_FORMULA}*2**n"
    c0f = "max(2 + (n + 1), n/2)"
    # SSY at q=0 with phi = 1 on B_r, 0 outside B_2r, chained with the p = 2 bound at radius 2r
    c4f = (f"e*({c0f})*(4/r**2 + (x0n + 2*r)**2)*{_ratio_formula(4)}*{V0_FORMULA}*4**n*r**2")
    out = {}
    for key, f in (("C_2", c2f), ("C_0", c0f), ("C_4", c4f)):
        c = Constant(0.0, f)
        out[key] = Constant(c.recompute(env), f)
    return out


def scale_invariant_energy(surface: SampledHypersurface, x0, r: float, p: float, lambda0: float,
                           cells: int = 96) -> EstimateReport:
    """``int_{B_r(x0)} |A|^p <= C r^{n-p}`` for ``2 <= p <= 4`` and ``r <= theta/2``."""
    _check_dim(surface)
    if not 2 <= p <= 4:
        raise EstimateError("p must lie in [2, 4]")
    x0 = np.asarray(x0, dtype=float)
    th = theta(x0)
    if not 0 < r <= 0.5 * th + 1e-12:
        raise EstimateError(f"r must lie in (0, theta/2] with theta = {th:.6g}")
    n = surface.n
    x0n = float(np.linalg.norm(x0))
    cloud = ball_cloud(surface, x0, r, cells=cells)
    lhs = cloud.integrate(cloud.normA2 ** (p / 2.0))
    consts = lemma43_constants(n, lambda0, r, x0n)
    C2, C4 = consts["C_2"].value, consts["C_4"].value
    t = (p - 2.0) / 2.0
    Cp = C2 ** (1 - t) * C4**t
    consts["C_p"] = Constant(Cp, f"({consts['C_2'].formula})**(1 - (p - 2)/2) * ({consts['C_4'].formula})**((p - 2)/2)")
    rhs = Cp * r ** (n - p)
    return make_report("scale_invariant_energy", lhs, rhs, hypothesis_status="not checked", constants=consts,
                       params={"n": n, "lambda0": float(lambda0), "r": float(r), "x0n": x0n, "p": float(p),
                               "x0": x0.tolist(), "theta": th},
                       notes=["1/2-stability is not checked; the inequality is measured directly"],
                       require_hypothesis=False)


# ---------------------------------------------------------------------------
# logarithmic cutoff
# ---------------------------------------------------------------------------

def log_cutoff_energy(surface: SampledHypersurface, p, r0: float, k: int, lambda0: float,
                      cells: int = 96, ring_min: int = RING_MIN, grad_tol: float = 1e-12) -> EstimateReport:
    """``int |A|^2 eta^2 <= (C/k) r0^{n-2}`` for the logarithmic cutoff ``eta`` about ``p``."""
    _check_dim(surface)
    if int(k) != k or k < 2:
        raise EstimateError("k must be an integer >= 2")
    k = int(k)
    p = np.asarray(p, dtype=float)
    lim = 0.25 * theta(p)
    if not 0 < r0 <= lim + 1e-12:
        raise EstimateError(f"r0 must lie in (0, {lim:.6g}]")
    n = surface.n
    eta = Logarithmic(r0=float(r0), k=k, center=tuple(p.tolist()))
    cloud = ball_cloud(surface, p, r0, cells=cells)
    bc = bind(eta, cloud.x, cloud.nu, p)
    r = bc.dist
    ann = (r > eta.inner) & (r <= r0)
    if np.any(bc.grad_norm[ann] > eta.slope_bound_at(r[ann]) + grad_tol):
        raise EstimateError("cutoff gradient exceeds 1/(k r)")
    rings, counts, bounds = [], [], []
    V0 = volume_constant(n, lambda0)
    for l in range(k):
        sel = (r > math.exp(-l - 1) * r0) & (r <= math.exp(-l) * r0)
        counts.append(int(sel.sum()))
        rings.append(cloud.integrate(np.where(sel, 1.0 / np.maximum(r, 1e-300) ** 2, 0.0)))
        bounds.append(V0 * math.exp(2 * (l + 1)) * math.exp(-n * l) * r0 ** (n - 2))
    if min(counts) < ring_min:
        raise EstimateError(f"annulus under-resolved: ring counts {counts} (need >= {ring_min})")
    lhs = cloud.integrate(cloud.normA2 * bc.values**2)
    inner = cloud.integrate(np.where(r <= eta.inner, cloud.normA2, 0.0))
    C = Constant(math.exp(3.0) * V0, f"exp(3) * {V0_FORMULA}")
    rhs = C.value / k * r0 ** (n - 2)
    chain = math.e / k**2 * sum(rings)
    return make_report("log_cutoff_energy", lhs, rhs, hypothesis_status="not checked", constants={"C": C},
                       params={"n": n, "lambda0": float(lambda0), "r0": float(r0), "k": k, "p": p.tolist()},
                       notes=["1/2-stability is not checked; the inequality is measured directly"],
                       require_hypothesis=False,
                       extra={"ring_integrals": rings, "ring_bounds": bounds, "ring_counts": counts,
                              "rings_within_bounds": bool(all(a <= b for a, b in zip(rings, bounds))),
                              "stability_chain_rhs": chain, "inner_ball_energy": inner})
