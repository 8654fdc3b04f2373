"""Finite-difference and spectral derivatives on structured chart grids.

Arrays are shaped ``chart.shape + trailing`` where trailing dimensions hold
vector or matrix components.  Three axis kinds are supported:

``open``
    Uniform spacing, second-order centred differences in the interior and
    second-order one-sided differences at both ends.
``periodic``
    Uniform periodic spacing, spectral (FFT) differentiation.
``pole``
    Cell-centred polar angle in ``(0, pi)`` paired with a periodic azimuth.
    Ghost layers come from the reflection ``F(-t, p) = F(t, p + pi)`` and the
    stencils are fourth order.
"""
from __future__ import annotations

import numpy as np


def _move(arr, axis):
    return np.moveaxis(arr, axis, 0)


def _open_d1(arr, h):
    return np.gradient(arr, h, axis=0, edge_order=2)


def _open_d2(arr, h):
    out = np.empty_like(arr)
    out[1:-1] = (arr[2:] - 2.0 * arr[1:-1] + arr[:-2]) / h**2
    out[0] = (2.0 * arr[0] - 5.0 * arr[1] + 4.0 * arr[2] - arr[3]) / h**2
    out[-1] = (2.0 * arr[-1] - 5.0 * arr[-2] + 4.0 * arr[-3] - arr[-4]) / h**2
    return out


def _periodic(arr, h, order):
    n = arr.shape[0]
    k = 2.0 * np.pi * np.fft.rfftfreq(n, d=h)
    shape = (k.size,) + (1,) * (arr.ndim - 1)
    spec = np.fft.rfft(arr, axis=0)
    if order == 1:
        mult = 1j * k
        if n % 2 == 0:
            mult[-1] = 0.0
    else:
        mult = -(k**2)
    return np.fft.irfft(spec * mult.reshape(shape), n=n, axis=0)


def _pole_pad(arr, partner, parity):
    # arr has the pole axis first; partner is the (shifted) periodic axis index
    half = arr.shape[partner] // 2
    lo = parity * np.roll(arr[1::-1], half, axis=partner)
    hi = parity * np.roll(arr[:-3:-1], half, axis=partner)
    return np.concatenate([lo, arr, hi], axis=0)


def _pole_d1(arr, h, partner, parity):
    p = _pole_pad(arr, partner, parity)
    return (-p[4:] + 8.0 * p[3:-1] - 8.0 * p[1:-3] + p[:-4]) / (12.0 * h)


def _pole_d2(arr, h, partner, parity):
    p = _pole_pad(arr, partner, parity)
    return (-p[4:] + 16.0 * p[3:-1] - 30.0 * p[2:-2] + 16.0 * p[1:-3] - p[:-4]) / (12.0 * h**2)


def derivative(arr, chart, axis, order=1, parity=1.0):
    """Derivative of ``arr`` along chart ``axis`` (order 1 or 2).

    ``parity`` is the sign picked up by the field under the polar reflection;
    it is -1 for fields that are themselves a single polar-angle derivative.
    """
    kind = chart.axes[axis]
    h = chart.spacing[axis]
    a = _move(np.asarray(arr, dtype=float), axis)
    if kind == "open":
        out = _open_d1(a, h) if order == 1 else _open_d2(a, h)
    elif kind == "periodic":
        out = _periodic(a, h, order)
    elif kind == "pole":
        if chart.pole_partner is None:
            raise NotImplementedError("polar stencils need a paired periodic axis (n = 2 spheres only)")
        partner = chart.pole_partner if chart.pole_partner > axis else chart.pole_partner + 1
        out = _pole_d1(a, h, partner, parity) if order == 1 else _pole_d2(a, h, partner, parity)
    else:
        raise ValueError(f"unknown axis kind {kind!r}")
    return np.moveaxis(out, 0, axis)


def mixed(arr, chart, i, j):
    """Mixed second derivative d_i d_j; a polar axis is always differentiated last."""
    if chart.axes[j] == "pole":
        i, j = j, i
    inner = derivative(arr, chart, j)
    return derivative(inner, chart, i)


def jet(arr, chart):
    """First and second chart derivatives of a grid array.

    Returns ``(d1, d2)`` with ``d1[i]`` and ``d2[i][j]`` arrays of the same
    shape as ``arr``.
    """
    n = len(chart.shape)
    d1 = [derivative(arr, chart, i) for i in range(n)]
    d2 = [[None] * n for _ in range(n)]
    for i in range(n):
        d2[i][i] = derivative(arr, chart, i, order=2)
        for j in range(i + 1, n):
            d2[i][j] = d2[j][i] = mixed(arr, chart, i, j)
    return d1, d2


def interior_depth_mask(chart, active, depth):
    """Nodes at least ``depth`` cells from an open-axis end or an inactive node."""
    mask = np.asarray(active, dtype=bool).copy()
    for _ in range(depth):
        nxt = mask.copy()
        for ax, kind in enumerate(chart.axes):
            if kind == "periodic":
                nxt &= np.roll(mask, 1, axis=ax) & np.roll(mask, -1, axis=ax)
            elif kind == "open":
                m = np.moveaxis(mask, ax, 0)
                shifted = np.zeros_like(m)
                shifted[1:-1] = m[2:] & m[:-2]
                nxt &= np.moveaxis(shifted, 0, ax)
        mask = nxt
    return mask
