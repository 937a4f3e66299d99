"""Cyclic phase descent shared by the inner-radius search and the precoder.

Both problems have the form  minimize | t - sum_i a_i exp(j psi_i) |  over the
angles psi, with fixed magnitudes a_i >= 0 and a complex target t. Work is
batched over a leading axis so a whole Monte-Carlo ensemble can be refined
at once.
"""

from __future__ import annotations

import numpy as np


def unit(x):
    """x / |x|, with 1 where x == 0."""
    x = np.asarray(x, dtype=complex)
    # pre-scale by the larger component so subnormal inputs divide cleanly
    big = np.maximum(np.abs(x.real), np.abs(x.imag))
    nz = big > 0
    d = np.where(nz, big, 1.0)
    y = x.real / d + 1j * (x.imag / d)
    r = np.where(nz, np.abs(y), 1.0)
    return np.where(nz, y.real / r + 1j * (y.imag / r), 1.0 + 0j)


def pair_fit(w, ai, aj):
    """Closest point to ``w`` of the form ``ai e^{jx} + aj e^{jy}``.

    The reachable set is the annulus ``|ai - aj| <= |z| <= ai + aj``; inside it
    the two phasors close the triangle exactly.
    """
    d = np.abs(w)
    e = unit(w)
    denom = np.where(d > 0, 2.0 * ai * d, 1.0)
    denom = np.where(denom > 0, denom, 1.0)
    cg = np.clip((ai * ai + d * d - aj * aj) / denom, -1.0, 1.0)
    zi = ai * e * np.exp(1j * np.arccos(cg))
    zj = w - zi
    outside = d >= ai + aj
    zi = np.where(outside, ai * e, zi)
    zj = np.where(outside, aj * e, zj)
    inside = d <= np.abs(ai - aj)
    sgn = np.where(ai >= aj, 1.0, -1.0)
    zi = np.where(inside, sgn * ai * e, zi)
    zj = np.where(inside, -sgn * aj * e, zj)
    # renormalise: w - zi only has magnitude aj up to rounding
    zj = aj * unit(zj)
    return zi, zj


def cyclic_descent(mags, psi, target, *, max_sweeps=500, tol=1e-12, scale=None,
                   pairs=False, history=None):
    """Run cyclic coordinate descent from angles ``psi``.

    Parameters
    ----------
    mags : (B, N) array of magnitudes.
    psi : (B, N) array of starting angles of the phasors ``mags * exp(j psi)``.
    target : (B,) complex array.
    tol : a sweep stops the loop once no batch member improved the residual
        by more than ``tol * scale``.
    pairs : after each single-angle sweep, also sweep adjacent angle pairs
        with the exact two-phasor fit.
    history : optional list; the residual after every single update is
        appended (only meaningful for B == 1).

    Returns
    -------
    psi, residual, sweeps
    """
    a = np.asarray(mags, dtype=float)
    z = a * np.exp(1j * np.asarray(psi, dtype=float))
    t = np.asarray(target, dtype=complex)
    b, n = a.shape
    if scale is None:
        scale = np.maximum(a.sum(axis=1), 1e-300)
    s = z.sum(axis=1)
    active = np.ones(b, dtype=bool)
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        prev = np.abs(t - s)
        for i in range(n):
            rest = s - z[:, i]
            zi = np.where(active, a[:, i] * unit(t - rest), z[:, i])
            z[:, i] = zi
            s = rest + zi
            if history is not None:
                history.append(float(np.abs(t - s)[0]))
        if pairs and n >= 2:
            for i in range(n):
                j = (i + 1) % n
                rest = s - z[:, i] - z[:, j]
                zi, zj = pair_fit(t - rest, a[:, i], a[:, j])
                keep = ~active | (np.abs(t - rest - zi - zj) > np.abs(t - s))
                z[:, i] = np.where(keep, z[:, i], zi)
                z[:, j] = np.where(keep, z[:, j], zj)
                s = rest + z[:, i] + z[:, j]
                if history is not None:
                    history.append(float(np.abs(t - s)[0]))
        # exact recompute keeps the running sum from drifting
        s = z.sum(axis=1)
        res = np.abs(t - s)
        active &= (prev - res > tol * scale) & (res > 1e-15 * scale)
        if not active.any():
            break
    return np.angle(z), np.abs(t - s), sweeps
