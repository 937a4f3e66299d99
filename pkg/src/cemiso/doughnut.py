"""Geometry of the set of noise-free received points under constant envelope.

With unit-modulus transmit phasors the normalized received point
``sum_i h_i exp(j theta_i) / sqrt(N)`` ranges over a closed annulus
(the "doughnut") whose outer radius is ``||h||_1 / sqrt(N)`` and whose inner
radius has to be searched for.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ._descent import cyclic_descent
from .fading import ChannelVector, as_channel

__all__ = [
    "DoughnutRegion",
    "InnerRadius",
    "wrap_phase",
    "outer_radius",
    "maximizing_phases",
    "alternating_phases",
    "inner_radius",
    "inner_radius_batch",
    "inner_radius_bruteforce",
    "polygon_inner_radius",
    "closed_form_inner_n2",
    "closed_form_inner_n3",
    "region",
    "contains",
    "received_point",
]


def wrap_phase(x):
    """Wrap angles to the half-open interval [-pi, pi)."""
    y = np.mod(np.asarray(x, dtype=float) + np.pi, 2.0 * np.pi) - np.pi
    # mod can round up to exactly 2*pi for tiny negative inputs
    return np.where(y >= np.pi, y - 2.0 * np.pi, y)


def received_point(h, phases) -> complex:
    """Normalized noise-free received value for the given transmit phases."""
    g = as_channel(h).gains
    return complex(np.sum(g * np.exp(1j * np.asarray(phases, dtype=float))) / np.sqrt(g.size))


@dataclass(frozen=True)
class DoughnutRegion:
    """Closed annulus ``inner <= |z| <= outer`` of normalized received values."""

    outer: float
    inner: float
    n_antennas: int

    def __post_init__(self):
        if not (0.0 <= self.inner <= self.outer):
            raise ValueError(f"need 0 <= inner <= outer, got inner={self.inner}, outer={self.outer}")

    @property
    def width(self) -> float:
        return self.outer - self.inner

    @property
    def area_factor(self) -> float:
        """M^2 - m^2."""
        return self.outer**2 - self.inner**2

    def contains(self, u, tol: float = 0.0) -> bool:
        r = abs(complex(u))
        return self.inner - tol <= r <= self.outer + tol


def contains(region: DoughnutRegion, u, tol: float = 0.0) -> bool:
    return region.contains(u, tol)


def outer_radius(h) -> float:
    ch = as_channel(h)
    return ch.l1 / np.sqrt(ch.n)


def maximizing_phases(h) -> np.ndarray:
    """Phases that co-phase every path, reaching the outer radius."""
    return wrap_phase(-np.angle(as_channel(h).gains))


def alternating_phases(h) -> np.ndarray:
    """Sort paths by magnitude and alternate their signs along the real axis.

    The resulting point has modulus at most ``max|h_i| / sqrt(N)``.
    """
    g = as_channel(h).gains
    order = np.argsort(-np.abs(g), kind="stable")
    theta = np.empty(g.size)
    theta[order] = -np.angle(g[order]) + np.pi * (np.arange(g.size) % 2)
    return wrap_phase(theta)


def polygon_inner_radius(h) -> float:
    """Exact inner radius from the polygon inequality.

    Phasors of lengths ``l_i`` can close a polygon iff the longest is no longer
    than the sum of the others, and otherwise the closest approach to the
    origin is ``2 max(l) - sum(l)``.
    """
    mags = np.abs(np.asarray(as_channel(h).gains))
    return max(0.0, 2.0 * mags.max() - mags.sum()) / np.sqrt(mags.size)


def closed_form_inner_n2(h) -> float:
    g = as_channel(h).gains
    if g.size != 2:
        raise ValueError(f"closed_form_inner_n2 needs N=2, got N={g.size}")
    a1, a2 = np.abs(g)
    return abs(a1 - a2) / np.sqrt(2.0)


def closed_form_inner_n3(h) -> float:
    g = as_channel(h).gains
    if g.size != 3:
        raise ValueError(f"closed_form_inner_n3 needs N=3, got N={g.size}")
    a1, a2, a3 = np.abs(g)
    d, s = abs(a1 - a2), a1 + a2
    if a3 <= d:
        return (d - a3) / np.sqrt(3.0)
    if a3 >= s:
        return (a3 - s) / np.sqrt(3.0)
    return 0.0


class InnerRadius(NamedTuple):
    value: float
    phases: np.ndarray
    converged: bool
    sweeps: int


def _channel_seed(g: np.ndarray) -> int:
    digest = hashlib.blake2b(np.ascontiguousarray(g).tobytes(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def inner_radius(h, *, restarts: int = 8, max_sweeps: int = 500, tol: float = 1e-12,
                 seed: int | None = None) -> InnerRadius:
    """Smallest normalized received modulus found by phase descent.

    The search starts from the alternating-sign construction and then from
    ``restarts`` random phase vectors (seeded from the channel bytes unless
    ``seed`` is given). Each sweep updates single angles in closed form and
    then adjacent pairs with the exact two-phasor fit. Restarts are skipped
    once a start reaches zero.
    """
    ch = as_channel(h)
    g = ch.gains
    n = g.size
    sqn = np.sqrt(n)
    if n == 1:
        return InnerRadius(ch.l1, np.array([wrap_phase(-np.angle(g[0]))]), True, 0)
    # descend on gains normalized by the largest magnitude so subnormal inputs stay finite
    peak = ch.linf if ch.linf > 0 else 1.0
    mags = np.abs(g)[None, :] / peak
    scale = max(ch.l1 / peak, 1e-300)
    rng = np.random.default_rng(_channel_seed(g) if seed is None else seed)

    starts = [alternating_phases(ch) + np.angle(g)]
    best = None
    converged_any = False
    for k in range(restarts + 1):
        psi0 = starts[0] if k == 0 else rng.uniform(-np.pi, np.pi, n)
        psi, res, sweeps = cyclic_descent(mags, psi0[None, :], np.zeros(1, complex),
                                          max_sweeps=max_sweeps, tol=tol, scale=scale,
                                          pairs=True)
        value = float(res[0])
        converged = sweeps < max_sweeps
        converged_any |= converged
        if best is None or value < best[0]:
            best = (value, psi[0], sweeps)
        if value <= 1e-14 * scale:
            break
    value, psi, sweeps = best
    theta = wrap_phase(psi - np.angle(g))
    return InnerRadius(value * peak / sqn, theta, bool(converged_any), int(sweeps))


def inner_radius_batch(gains, *, restarts: int = 8, max_sweeps: int = 500, tol: float = 1e-12,
                       seed: int = 0) -> np.ndarray:
    """Vectorized :func:`inner_radius` over the rows of a ``(T, N)`` gain array.

    Only rows still above zero are restarted.
    """
    g = np.atleast_2d(np.asarray(gains, dtype=complex))
    t, n = g.shape
    mags = np.abs(g)
    if n == 1:
        return mags[:, 0].copy()
    peak = mags.max(axis=1)
    peak = np.where(peak > 0, peak, 1.0)
    mags = mags / peak[:, None]
    scale = np.maximum(mags.sum(axis=1), 1e-300)
    order = np.argsort(-mags, axis=1, kind="stable")
    psi0 = np.empty_like(mags)
    np.put_along_axis(psi0, order, np.broadcast_to(np.pi * (np.arange(n) % 2), (t, n)), axis=1)
    _, best, _ = cyclic_descent(mags, psi0, np.zeros(t, complex), max_sweeps=max_sweeps,
                                tol=tol, scale=scale, pairs=True)
    rng = np.random.default_rng(seed)
    for _ in range(restarts):
        todo = np.flatnonzero(best > 1e-14 * scale)
        if todo.size == 0:
            break
        start = rng.uniform(-np.pi, np.pi, (todo.size, n))
        _, res, _ = cyclic_descent(mags[todo], start, np.zeros(todo.size, complex),
                                   max_sweeps=max_sweeps, tol=tol, scale=scale[todo], pairs=True)
        best[todo] = np.minimum(best[todo], res)
    return best * peak / np.sqrt(n)


def inner_radius_bruteforce(h, grid_points_per_angle: int = 360, *,
                            max_evaluations: int = 50_000_000) -> float:
    """Grid-search oracle for the inner radius (first phase pinned to 0).

    Exceeds the true inner radius by at most ``||h||_1 * pi / (grid * sqrt(N))``.
    """
    g = as_channel(h).gains
    n = g.size
    if n > 6:
        raise ValueError(f"brute force is limited to N <= 6, got N={n}")
    grid = int(grid_points_per_angle)
    if grid < 1:
        raise ValueError("grid_points_per_angle must be positive")
    if grid ** (n - 1) > max_evaluations:
        raise ValueError(f"grid^(N-1) = {grid ** (n - 1)} exceeds the budget of {max_evaluations}")
    if n == 1:
        return float(abs(g[0]))
    phasor = np.exp(2j * np.pi * np.arange(grid) / grid)
    terms = [g[i] * phasor for i in range(1, n)]
    best = np.inf
    # outer loop over the first free angle keeps memory at grid^(n-2)
    rest = np.zeros(1, complex)
    for t in terms[1:]:
        rest = (rest[:, None] + t[None, :]).ravel()
    for v in terms[0]:
        best = min(best, float(np.min(np.abs(g[0] + v + rest))))
    return best / np.sqrt(n)


def region(h, inner: float | None = None, **opts) -> DoughnutRegion:
    """Doughnut of ``h``; pass ``inner`` to skip the inner-radius search."""
    ch = as_channel(h)
    outer = outer_radius(ch)
    if inner is None:
        inner = inner_radius(ch, **opts).value
    return DoughnutRegion(outer=outer, inner=min(float(inner), outer), n_antennas=ch.n)

