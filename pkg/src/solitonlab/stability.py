"""Drift and stability operators, identity residuals and weighted Dirichlet spectra.

Strong-form stencils apply the operators to known smooth fields.  The
eigenproblems use a weak form: an isoparametric multilinear finite element
stiffness matrix on the chart grid and diagonal (lumped) mass and potential
matrices built from the exact sample area weights.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg

from .geometry import (compute_geometry, grid_calculus, interior_mask, profile_calculus,
                       _chart_fields)
from .reports import make_report
from .surfaces import GridChart, ProfileChart, SampledHypersurface, truncate

MAX_UNKNOWNS = 4000
TOL_DISC = 1e-3


class StabilityError(ValueError):
    pass


def gaussian_weight(x):
    return np.exp(-np.sum(np.asarray(x) ** 2, axis=-1) / 4.0)


def translator_weight(x):
    return np.exp(np.asarray(x)[..., -1])


# ---------------------------------------------------------------------------
# strong-form operators
# ---------------------------------------------------------------------------

def _grid_values(surface, field_values):
    ch = surface.chart
    vals = np.asarray(field_values, dtype=float)
    if isinstance(ch, GridChart):
        if vals.shape == tuple(ch.shape):
            return vals
        return ch.scatter(surface.index, vals)
    full = np.full(ch.r.shape, np.nan)
    full[surface.index] = vals
    return full


def _to_samples(surface, grid):
    ch = surface.chart
    if isinstance(ch, GridChart):
        return ch.gather(surface.index, grid)
    return np.asarray(grid)[surface.index]


def _drift_grid(surface, grid):
    ch = surface.chart
    if isinstance(ch, GridChart):
        try:
            calc = grid_calculus(ch)
        except NotImplementedError as exc:
            raise StabilityError(f"strong-form stencils unavailable on this chart: {exc}") from exc
        return calc.laplacian(grid) - 0.5 * calc.directional(grid, ch.grid_x)
    calc = profile_calculus(ch)
    return calc.laplacian(grid) - 0.5 * calc.dot_position(grid)


def _check_interior(surface, out):
    # mixed stencils reach diagonal neighbours
    mask = interior_mask(surface, 2)
    bad = mask & ~np.isfinite(out)
    if np.any(bad):
        raise StabilityError(f"non-finite stencil output at interior sample {int(np.flatnonzero(bad)[0])}")
    return out


def drift_apply(surface: SampledHypersurface, values) -> np.ndarray:
    """Apply the drift operator ``Delta f - <x, grad f>/2`` to per-sample values."""
    out = _to_samples(surface, _drift_grid(surface, _grid_values(surface, values)))
    return _check_interior(surface, out)


def _potential_grid(surface):
    return _chart_fields(surface.chart)["normA2"] + 0.5


def stability_apply(surface: SampledHypersurface, values) -> np.ndarray:
    """Apply ``L f = drift f + (|A|^2 + 1/2) f``."""
    grid = _grid_values(surface, values)
    out = _drift_grid(surface, grid) + _potential_grid(surface) * grid
    return _check_interior(surface, _to_samples(surface, out))


def _normal_grid(surface):
    ch = surface.chart
    if isinstance(ch, GridChart):
        return ch.grid_nu
    calc = profile_calculus(ch)
    nu = np.zeros(ch.r.shape + (surface.n + 1,))
    nu[:, 0] = -ch.orientation * calc.du / calc.W
    nu[:, -1] = ch.orientation / calc.W
    return nu


def eigen_identity_residuals(surface: SampledHypersurface, v, depth: int = 2) -> dict:
    """sup |LH - H| and sup |L<v,nu> - <v,nu>/2| over interior samples."""
    f = _chart_fields(surface.chart)
    H = f["H"]
    w = np.einsum("...m,m->...", _normal_grid(surface), np.asarray(v, dtype=float))
    pot = f["normA2"] + 0.5
    LH = _drift_grid(surface, H) + pot * H
    Lw = _drift_grid(surface, w) + pot * w
    mask = interior_mask(surface, depth)
    rH = np.abs(_to_samples(surface, LH - H))[mask]
    rV = np.abs(_to_samples(surface, Lw - 0.5 * w))[mask]
    return {"rH": float(np.max(rH)), "rV": float(np.max(rV))}


def simons_identity_residual(surface: SampledHypersurface, depth: int = 2, mask=None) -> float:
    """sup |drift |A|^2 - (|A|^2 - 2|A|^4 + 2|grad A|^2)| over interior samples."""
    f = _chart_fields(surface.chart)
    a2 = f["normA2"]
    lhs = _drift_grid(surface, a2)
    res = np.abs(_to_samples(surface, lhs - (a2 - 2.0 * a2**2 + 2.0 * f["gradA2"])))
    m = interior_mask(surface, depth) if mask is None else mask
    return float(np.max(res[m]))


# ---------------------------------------------------------------------------
# weak-form assembly
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class OperatorMatrices:
    K: np.ndarray
    P: np.ndarray
    M: np.ndarray
    interior: np.ndarray
    R: float
    h: float
    weight_name: str = "gaussian"

    @property
    def size(self):
        return self.interior.size


_GAUSS = (0.5 - 0.5 / math.sqrt(3.0), 0.5 + 0.5 / math.sqrt(3.0))


def _grid_stiffness(ch: GridChart, unknown_nodes, weight):
    """Stiffness matrix over the unknown chart nodes (flat chart indices)."""
    n = ch.dim
    shape = ch.shape
    lookup = -np.ones(ch.size, dtype=int)
    lookup[unknown_nodes] = np.arange(unknown_nodes.size)
    cell_starts = []
    for ax, kind in enumerate(ch.axes):
        count = shape[ax] if kind == "periodic" else shape[ax] - 1
        cell_starts.append(np.arange(count))
    starts = np.stack(np.meshgrid(*cell_starts, indexing="ij"), axis=-1).reshape(-1, n)
    corners = list(itertools.product((0, 1), repeat=n))
    node_ids = []
    for c in corners:
        idx = starts + np.array(c)
        for ax, kind in enumerate(ch.axes):
            if kind == "periodic":
                idx[:, ax] %= shape[ax]
        node_ids.append(np.ravel_multi_index(idx.T, shape))
    node_ids = np.stack(node_ids, axis=1)
    local = lookup[node_ids]
    keep = np.any(local >= 0, axis=1)
    node_ids, local = node_ids[keep], local[keep]
    X = ch.grid_x.reshape(ch.size, -1)[node_ids]
    h = np.asarray(ch.spacing)
    K = np.zeros((unknown_nodes.size, unknown_nodes.size))
    for gp in itertools.product(_GAUSS, repeat=n):
        N = np.empty(len(corners))
        dN = np.empty((len(corners), n))
        for a, c in enumerate(corners):
            vals = [gp[j] if c[j] else 1.0 - gp[j] for j in range(n)]
            N[a] = np.prod(vals)
            for j in range(n):
                d = 1.0 if c[j] else -1.0
                dN[a, j] = d * np.prod([vals[k] for k in range(n) if k != j]) / h[j]
        J = np.einsum("eam,aj->ejm", X, dN)
        g = np.einsum("ejm,ekm->ejk", J, J)
        ginv = np.linalg.inv(g)
        sqrtg = np.sqrt(np.linalg.det(g))
        xg = np.einsum("eam,a->em", X, N)
        wq = (0.5**n) * np.prod(h) * sqrtg * weight(xg)
        Ke = np.einsum("e,aj,ejk,bk->eab", wq, dN, ginv, dN)
        rows = np.repeat(local[:, :, None], len(corners), axis=2)
        cols = np.repeat(local[:, None, :], len(corners), axis=1)
        ok = (rows >= 0) & (cols >= 0)
        np.add.at(K, (rows[ok], cols[ok]), Ke[ok])
    return 0.5 * (K + K.T)


def _profile_stiffness(ch: ProfileChart, unknown_nodes, weight):
    n = ch.n
    r, u, du = ch.r, ch.u, ch.du
    area = 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)
    lookup = -np.ones(r.size, dtype=int)
    lookup[unknown_nodes] = np.arange(unknown_nodes.size)
    K = np.zeros((unknown_nodes.size, unknown_nodes.size))
    i0 = np.arange(r.size - 1)
    hs = r[1:] - r[:-1]
    for gp in _GAUSS:
        rg = r[:-1] + gp * hs
        ug = (1 - gp) * u[:-1] + gp * u[1:]
        dug = (1 - gp) * du[:-1] + gp * du[1:]
        W = np.sqrt(1.0 + dug**2)
        xg = np.zeros((rg.size, n + 1))
        xg[:, 0] = rg
        xg[:, -1] = ug
        wq = 0.5 * hs * area * rg ** (n - 1) * W * weight(xg) / W**2 / hs**2
        loc = np.stack([lookup[i0], lookup[i0 + 1]], axis=1)
        sgn = np.array([-1.0, 1.0])
        for a in range(2):
            for b in range(2):
                ok = (loc[:, a] >= 0) & (loc[:, b] >= 0)
                np.add.at(K, (loc[ok, a], loc[ok, b]), wq[ok] * sgn[a] * sgn[b])
    return 0.5 * (K + K.T)


def _unknowns(surface, R):
    sub = truncate(surface, R) if R is not None else surface
    inner = ~sub.boundary & (sub.radius < (R if R is not None else np.inf))
    return sub.index[inner]


def assemble_nodes(surface, nodes, weight, potential, weight_name, R=math.inf, min_interior=10):
    """Forms over the given unknown chart nodes; every other node carries the value 0."""
    nodes = np.sort(np.asarray(nodes, dtype=int))
    count = int(nodes.size)
    if count < min_interior:
        raise StabilityError(f"too few interior samples: {count} < {min_interior}")
    if count > MAX_UNKNOWNS:
        raise StabilityError(f"{count} interior samples exceed the dense solver cap of {MAX_UNKNOWNS}; "
                             "use a coarser resolution or a smaller radius")
    ch = surface.chart
    if isinstance(ch, GridChart):
        K = _grid_stiffness(ch, nodes, weight)
    else:
        K = _profile_stiffness(ch, nodes, weight)
    interior = np.flatnonzero(np.isin(surface.index, nodes))
    order = np.argsort(surface.index[interior])
    interior = interior[order]
    x = surface.x[interior]
    wdmu = surface.dmu[interior] * weight(x)
    fields = compute_geometry(surface)
    M = np.diag(wdmu)
    P = np.diag(potential(fields.normA2[interior]) * wdmu)
    return OperatorMatrices(K=K, P=P, M=M, interior=interior, R=float(R), h=float(ch.h), weight_name=weight_name)


def assemble(surface: SampledHypersurface, R: Optional[float]) -> OperatorMatrices:
    """Quadratic forms of the stability operator on the interior of the region ``B_R``."""
    nodes = np.sort(_unknowns(surface, R))
    return assemble_nodes(surface, nodes, gaussian_weight, lambda a2: a2 + 0.5, "gaussian",
                          R=math.inf if R is None else R)


@dataclass(frozen=True, eq=False)
class SpectralResult:
    R: float
    h: float
    eigenvalues: np.ndarray
    eigenfields: np.ndarray
    residuals: np.ndarray
    interior: np.ndarray
    matrices: OperatorMatrices = field(repr=False, default=None)

    @property
    def first(self):
        return float(self.eigenvalues[0])

    def to_dict(self, delta=None, verdict=None, margin=None, tol_disc=TOL_DISC, seed=None, operator="shrinker"):
        return {"schema": "spectrum.v1", "operator": operator, "R": self.R, "h": self.h,
                "eigenvalues": [float(e) for e in self.eigenvalues], "delta": delta, "verdict": verdict,
                "margin": margin, "tol_disc": tol_disc, "seed": seed}


def solve(mats: OperatorMatrices, m: int = 1) -> SpectralResult:
    A = mats.K - mats.P
    m = int(min(max(1, m), mats.size))
    mdiag = np.diag(mats.M)
    if np.any(mdiag <= 0):
        raise StabilityError("mass matrix is not positive definite (assembly bug)")
    try:
        w, V = scipy.linalg.eigh(A, mats.M, subset_by_index=[0, m - 1])
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise StabilityError(f"eigensolver failure: {exc}") from exc
    res = A @ V - mats.M @ V * w
    norms = np.sqrt(np.sum(res**2 / mdiag[:, None], axis=0))
    return SpectralResult(R=mats.R, h=mats.h, eigenvalues=w, eigenfields=V, residuals=norms,
                          interior=mats.interior, matrices=mats)


def first_eigenvalue(surface: SampledHypersurface, R: Optional[float], m: int = 1) -> SpectralResult:
    """Least ``m`` Dirichlet eigenvalues of ``-L`` on the region ``B_R``."""
    return solve(assemble(surface, R), m)


def rayleigh_quotient(mats: OperatorMatrices, phi) -> float:
    phi = np.asarray(phi, dtype=float)
    return float(phi @ (mats.K - mats.P) @ phi / (phi @ mats.M @ phi))


def is_delta_stable(surface, R, delta: float, tol_disc: float = TOL_DISC, spectrum: Optional[SpectralResult] = None):
    spec = spectrum if spectrum is not None else first_eigenvalue(surface, R)
    lam = spec.first
    return {"verdict": bool(lam >= -delta - tol_disc), "lambda1": lam, "margin": lam + delta,
            "tol_disc": tol_disc, "R": spec.R, "h": spec.h}


# ---------------------------------------------------------------------------
# graphical => 1/2-stability
# ---------------------------------------------------------------------------

def random_bumps(surface: SampledHypersurface, R: float, trials: int, seed: int, margin: float):
    """Seeded tensor-product bumps supported in ``B_{R - margin}`` around random samples."""
    rng = np.random.default_rng(seed)
    x = surface.x
    reach = R - margin
    pool = np.flatnonzero(np.linalg.norm(x, axis=1) <= 0.5 * reach)
    out = []
    for _ in range(trials):
        c = x[rng.choice(pool)]
        room = reach - np.linalg.norm(c)
        w = rng.uniform(0.35, 0.65) * room / math.sqrt(x.shape[1])
        t = np.clip(1.0 - ((x - c) / w) ** 2, 0.0, None)
        out.append(np.prod(t**3, axis=1))
    return out


def graphical_stability_certificate(surface: SampledHypersurface, v, R: float, trials: int = 20, seed: int = 0,
                                    phi=None, tol: float = 1e-10):
    """Check the graphical identity for ``log <v, nu>`` and the stability inequality on test fields."""
    v = np.asarray(v, dtype=float)
    v = v / np.linalg.norm(v)
    sub = truncate(surface, R)
    w = sub.nu @ v
    if np.any(w <= 0):
        raise StabilityError(f"not graphical: <v, nu> <= 0 at sample {int(np.flatnonzero(w <= 0)[0])}")
    mats = assemble(surface, R)
    inner_idx = mats.interior
    fields = compute_geometry(surface)
    if phi is not None:
        phi = np.asarray(phi, dtype=float)
        outside = np.ones(surface.size, dtype=bool)
        outside[inner_idx] = False
        if np.any(np.abs(phi[outside]) > 0):
            raise StabilityError("test field must vanish on the boundary and outside B_R (compact support)")
        tests = [phi]
    else:
        tests = random_bumps(surface, R, trials, seed, margin=3.0 * surface.chart.h)
    # (a) identity for h = log w on the full chart
    f = _chart_fields(surface.chart)
    wg = np.einsum("...m,m->...", _normal_grid(surface), v)
    hg = np.log(wg)
    ch = surface.chart
    if isinstance(ch, GridChart):
        gn = grid_calculus(ch).grad_norm2(hg)
    else:
        gn = profile_calculus(ch).grad_norm2(hg)
    res_grid = _drift_grid(surface, hg) + gn + f["normA2"]
    mask = interior_mask(sub, 2)
    res = np.abs(_to_samples(sub, res_grid))[mask]
    ident_sup = float(np.max(res)) if res.size else 0.0
    from .geometry import shrinker_residual

    shrink_sup = shrinker_residual(sub)["sup_norm"]
    rho_dmu = surface.dmu * gaussian_weight(surface.x)
    worst_lhs, worst_rhs, worst_gap = 0.0, 0.0, -math.inf
    trial_rows = []
    for t in tests:
        tin = t[inner_idx]
        lhs = float(np.sum(fields.normA2 * t**2 * rho_dmu))
        rhs = float(tin @ mats.K @ tin)
        trial_rows.append({"lhs": lhs, "rhs": rhs, "pass": lhs <= rhs + tol})
        if lhs - rhs > worst_gap:
            worst_gap, worst_lhs, worst_rhs = lhs - rhs, lhs, rhs
    notes = [f"log<v,nu> identity sup residual {ident_sup:.3e}",
             f"shrinker residual sup {shrink_sup:.3e}"]
    if shrink_sup > 1e-6:
        notes.append("surface is not a shrinker: only the integrated inequality is asserted")
    return make_report(
        "graphical_stability", worst_lhs, worst_rhs + tol,
        hypothesis_status="holds",
        params={"R": float(R), "v": v.tolist(), "trials": len(tests), "seed": seed, "tol": tol},
        notes=notes,
        extra={"identity_residual": ident_sup, "shrinker_residual": shrink_sup, "trials": trial_rows},
    )
