"""Newton solver for self-shrinking graphs over a square.

Solves ``(delta_ij - u_i u_j / W^2) u_ij = (p . Du - u) / 2`` with Dirichlet
data on the boundary of ``[-L, L]^2`` by centred differences.  The Jacobian
is built by finite differences with a 9-colour grouping of the unknowns.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .surfaces import GraphPatch, SampledHypersurface, make_graph


class ConvergenceError(RuntimeError):
    pass


def _residual(U, h, P1, P2):
    ux = (U[2:, 1:-1] - U[:-2, 1:-1]) / (2 * h)
    uy = (U[1:-1, 2:] - U[1:-1, :-2]) / (2 * h)
    uxx = (U[2:, 1:-1] - 2 * U[1:-1, 1:-1] + U[:-2, 1:-1]) / h**2
    uyy = (U[1:-1, 2:] - 2 * U[1:-1, 1:-1] + U[1:-1, :-2]) / h**2
    uxy = (U[2:, 2:] - U[2:, :-2] - U[:-2, 2:] + U[:-2, :-2]) / (4 * h**2)
    W2 = 1.0 + ux**2 + uy**2
    lhs = (1 - ux**2 / W2) * uxx + (1 - uy**2 / W2) * uyy - 2 * ux * uy / W2 * uxy
    return lhs - 0.5 * (P1 * ux + P2 * uy - U[1:-1, 1:-1])


def _jacobian(U, h, P1, P2, eps=1e-7):
    m = U.shape[0] - 2
    base = _residual(U, h, P1, P2)
    rows, cols, vals = [], [], []
    ii, jj = np.meshgrid(np.arange(m), np.arange(m), indexing="ij")
    for ci in range(3):
        for cj in range(3):
            sel = (ii % 3 == ci) & (jj % 3 == cj)
            Up = U.copy()
            Up[1:-1, 1:-1][sel] += eps
            d = (_residual(Up, h, P1, P2) - base) / eps
            si, sj = ii[sel], jj[sel]
            for di in (-1, 0, 1):
                for dj in (-1, 0, 1):
                    ri, rj = si + di, sj + dj
                    ok = (ri >= 0) & (ri < m) & (rj >= 0) & (rj < m)
                    rows.append(ri[ok] * m + rj[ok])
                    cols.append(si[ok] * m + sj[ok])
                    vals.append(d[ri[ok], rj[ok]])
    J = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(m * m, m * m))
    return J, base


@dataclass(frozen=True, eq=False)
class GraphShrinkerSolution:
    patch: GraphPatch
    residual_sup: float
    iterations: int


def solve_graph_shrinker(half_width: float = 8.5, h: float = 0.0625, eps: float = 0.1, boundary=None,
                         tol: float = 1e-11, maxiter: int = 30) -> GraphShrinkerSolution:
    """Newton iteration from ``u = 0`` in the interior.

    The default boundary data ``eps (p1^2 - p2^2) / L^2`` is even in both
    variables; odd data would excite the nearly singular linear modes.
    """
    count = int(round(2 * half_width / h)) + 1
    axis = -half_width + h * np.arange(count)
    P1, P2 = np.meshgrid(axis, axis, indexing="ij")
    if boundary is None:
        g = eps * (P1**2 - P2**2) / half_width**2
    else:
        g = boundary(np.stack([P1, P2], axis=-1))
    U = g.copy()
    U[1:-1, 1:-1] = 0.0
    Pi1, Pi2 = P1[1:-1, 1:-1], P2[1:-1, 1:-1]
    it = 0
    for it in range(1, maxiter + 1):
        J, F = _jacobian(U, h, Pi1, Pi2)
        du = spla.spsolve(J.tocsc(), -F.reshape(-1))
        U[1:-1, 1:-1] += du.reshape(F.shape)
        res = float(np.max(np.abs(_residual(U, h, Pi1, Pi2))))
        if res < tol or np.max(np.abs(du)) < 1e-14:
            break
    else:
        raise ConvergenceError(f"Newton did not converge in {maxiter} iterations (residual {res:.3e})")
    patch = GraphPatch(lo=(-half_width, -half_width), hi=(axis[-1], axis[-1]), grid_shape=(count, count),
                       spacing=h, heights=U)
    return GraphShrinkerSolution(patch=patch, residual_sup=res, iterations=it)


def near_plane_shrinker(half_width: float = 8.5, h: float = 0.0625, eps: float = 0.1) -> SampledHypersurface:
    sol = solve_graph_shrinker(half_width, h, eps)
    return make_graph(sol.patch, source="custom")
