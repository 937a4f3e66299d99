"""Rate expressions and bounds for the doughnut channel ``y = sqrt(P_T) u + w``.

All rates are in bits per channel use. ``snr`` always means the linear ratio
``P_T / sigma^2``; radii are the normalized doughnut radii ``M(h)`` and
``m(h)``. Most functions broadcast over numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .doughnut import DoughnutRegion, outer_radius
from .fading import as_channel

__all__ = [
    "SnrPoint",
    "RateBounds",
    "GapBounds",
    "EpiBound",
    "db_to_linear",
    "linear_to_db",
    "epi_lower_bound",
    "kl_upper_bound_i1",
    "kl_upper_bound_i1_loose",
    "kl_beta_bound",
    "kl_upper_bound_numeric",
    "papc_capacity",
    "atpc_capacity",
    "combined_upper_bound_i2",
    "rate_bounds",
    "kappa",
    "power_gap_bounds",
    "asymptotic_gap_bounds",
    "capacity_ratio_bound",
    "low_snr_capacity_ratio",
    "efficiency_gain_rho",
]

LOG2E = np.log2(np.e)


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def linear_to_db(x):
    return 10.0 * np.log10(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class SnrPoint:
    """Linear ratio ``P_T / sigma^2``."""

    pt_over_sigma2: float

    def __post_init__(self):
        if not (np.isfinite(self.pt_over_sigma2) and self.pt_over_sigma2 > 0):
            raise ValueError(f"snr must be positive and finite, got {self.pt_over_sigma2!r}")

    @classmethod
    def from_db(cls, db: float) -> "SnrPoint":
        return cls(float(db_to_linear(db)))

    @property
    def db(self) -> float:
        return float(linear_to_db(self.pt_over_sigma2))

    def __float__(self):
        return float(self.pt_over_sigma2)


def _snr(snr):
    if isinstance(snr, SnrPoint):
        return snr.pt_over_sigma2
    return np.asarray(snr, dtype=float)


def _radii(region):
    if isinstance(region, DoughnutRegion):
        return region.outer, region.inner
    outer, inner = region
    return np.asarray(outer, dtype=float), np.asarray(inner, dtype=float)


class EpiBound(float):
    """Float carrying a ``degenerate`` flag (set when ``M <= m``)."""

    degenerate: bool

    def __new__(cls, value, degenerate=False):
        obj = super().__new__(cls, value)
        obj.degenerate = bool(degenerate)
        return obj


def epi_lower_bound(region, snr):
    """``log2(1 + snr (M^2 - m^2) / e)``; the uniform-in-doughnut rate floor.

    ``region`` is a :class:`DoughnutRegion` or an ``(outer, inner)`` pair of
    arrays. For a single region the result is an :class:`EpiBound`, whose
    ``degenerate`` flag marks a zero-area doughnut (value 0).
    """
    outer, inner = _radii(region)
    area = np.maximum(np.asarray(outer) ** 2 - np.asarray(inner) ** 2, 0.0)
    value = np.log2(1.0 + _snr(snr) * area / np.e)
    if np.ndim(value) == 0:
        return EpiBound(float(value), degenerate=bool(area <= 0.0))
    return value


def kl_upper_bound_i1(outer, snr):
    """Relative-entropy bound, valid for any input on a disc of radius ``outer``.

    ``0.5 log2(pi / 2e) + 0.5 log2(M^4 snr^2 + 4 M^2 snr + 2)``.
    """
    outer = outer.outer if isinstance(outer, DoughnutRegion) else np.asarray(outer, dtype=float)
    x = _snr(snr) * outer**2
    return 0.5 * np.log2(np.pi / (2 * np.e)) + 0.5 * np.log2(x * x + 4.0 * x + 2.0)


def kl_upper_bound_i1_loose(outer, snr):
    """``0.5 log2(2 pi / e) + log2(1 + snr M^2 / 2)``, never below :func:`kl_upper_bound_i1`."""
    outer = outer.outer if isinstance(outer, DoughnutRegion) else np.asarray(outer, dtype=float)
    return 0.5 * np.log2(2 * np.pi / np.e) + np.log2(1.0 + _snr(snr) * outer**2 / 2.0)


def kl_beta_bound(beta, outer, snr):
    """The bound before optimizing the reference density ``2 b exp(-pi^3 b^2 |z|^4)``.

    Written in the unnormalized form with ``sigma^2 / P_T = 1 / snr``.
    """
    s = float(_snr(snr))
    q = outer**4 + 2.0 / s**2 + 4.0 * outer**2 / s
    return -np.log2(2.0 * beta) + np.pi**3 * beta**2 * LOG2E * q - np.log2(np.pi * np.e / s)


def kl_upper_bound_numeric(outer, snr) -> float:
    """Minimize :func:`kl_beta_bound` over ``beta > 0`` numerically (in ``log beta``)."""
    s = float(_snr(snr))
    q = outer**4 + 2.0 / s**2 + 4.0 * outer**2 / s
    guess = -0.5 * np.log(2 * np.pi**3 * q)
    res = optimize.minimize_scalar(lambda lb: kl_beta_bound(np.exp(lb), outer, s),
                                   bracket=(guess - 1.0, guess + 1.0), tol=1e-12)
    return float(res.fun)


def papc_capacity(outer, snr):
    """``log2(1 + snr M^2)``: per-antenna average power constraint."""
    outer = outer.outer if isinstance(outer, DoughnutRegion) else np.asarray(outer, dtype=float)
    return np.log2(1.0 + _snr(snr) * outer**2)


def atpc_capacity(h, snr):
    """``log2(1 + snr ||h||_2^2)``: total power constraint, achieved by MRT.

    ``h`` is a channel, complex gains (``(N,)`` or ``(T, N)``) or a real
    array of squared norms ``||h||_2^2``.
    """
    if hasattr(h, "gains"):
        norm2 = h.l2**2
    else:
        h = np.asarray(h)
        norm2 = h if h.dtype.kind == "f" else np.sum(np.abs(h) ** 2, axis=-1)
    return np.log2(1.0 + _snr(snr) * norm2)


def combined_upper_bound_i2(outer, snr):
    """``min(I1, C_PAPC)``."""
    return np.minimum(kl_upper_bound_i1(outer, snr), papc_capacity(outer, snr))


@dataclass(frozen=True)
class RateBounds:
    epi_lower: float
    kl_upper_i1: float
    papc: float
    combined_upper_i2: float
    atpc: float


def rate_bounds(h, region: DoughnutRegion, snr) -> RateBounds:
    i1 = float(kl_upper_bound_i1(region.outer, snr))
    papc = float(papc_capacity(region.outer, snr))
    return RateBounds(float(epi_lower_bound(region, snr)), i1, papc, min(i1, papc),
                      float(atpc_capacity(h, snr)))


def kappa(h, inner):
    """``(M^2 - m^2) / (e ||h||_2^2)`` with ``m`` supplied by the caller.

    ``h`` is a channel, or a ``(T, N)`` gain array with ``inner`` of shape ``(T,)``.
    """
    g = np.asarray(h.gains if hasattr(h, "gains") else h, dtype=complex)
    mags = np.abs(g)
    n = g.shape[-1]
    outer2 = mags.sum(axis=-1) ** 2 / n
    norm2 = np.sum(mags**2, axis=-1)
    return (outer2 - np.asarray(inner, dtype=float) ** 2) / (np.e * norm2)


@dataclass(frozen=True)
class GapBounds:
    """CE-versus-MRT power gap in dB; ``lower == upper`` for the low-SNR approximation."""

    lower_db: float
    upper_db: float


def power_gap_bounds(h, regime: str = "high", inner=None):
    """Per-realization CE-vs-MRT power gap.

    ``regime="low"`` gives the approximation ``||h||^2 / M^2`` (as both ends);
    ``regime="high"`` gives ``2 ||h||^2 / M^2`` below and ``1 / kappa`` above
    (``inner`` required). Works on one channel or a ``(T, N)`` gain array.
    """
    g = np.asarray(h.gains if hasattr(h, "gains") else h, dtype=complex)
    mags = np.abs(g)
    n = g.shape[-1]
    ratio = np.sum(mags**2, axis=-1) * n / mags.sum(axis=-1) ** 2
    if regime == "low":
        low = linear_to_db(ratio)
        return GapBounds(float(low), float(low)) if np.ndim(low) == 0 else (low, low)
    if regime != "high":
        raise ValueError(f"regime must be 'low' or 'high', got {regime!r}")
    if inner is None:
        raise ValueError("high-SNR upper bound needs the inner radius")
    low = linear_to_db(2.0 * ratio)
    up = linear_to_db(1.0 / kappa(g, inner))
    if np.ndim(low) == 0:
        return GapBounds(float(low), float(up))
    return low, up


def asymptotic_gap_bounds(mean_abs: float, mean_sq: float) -> GapBounds:
    """Large-N high-SNR gap bounds from the moments ``E|h_i|`` and ``E|h_i|^2``.

    The inner radius vanishes in the limit, so the bounds are
    ``2 r`` and ``e r`` with ``r = E|h|^2 / (E|h|)^2``.
    """
    r = mean_sq / mean_abs**2
    return GapBounds(float(linear_to_db(2.0 * r)), float(linear_to_db(np.e * r)))


def capacity_ratio_bound(h, inner, snr):
    """Lower bound ``1 - log2(1/kappa) / C_ATPC`` on the CE-to-ATPC rate ratio."""
    c = atpc_capacity(h, snr)
    if np.any(np.asarray(c) <= 0):
        raise ValueError("ATPC capacity must be positive")
    return 1.0 - np.log2(1.0 / kappa(h, inner)) / c


def low_snr_capacity_ratio(h):
    """``M(h)^2 / ||h||_2^2``, the low-SNR CE-to-ATPC rate ratio."""
    ch = as_channel(h)
    return outer_radius(ch) ** 2 / ch.l2**2


def efficiency_gain_rho(pae_nonlinear: float, pae_linear: float, gap_db: float):
    """Net power-efficiency gain of CE over linear amplification.

    Returns ``(rho, rho_db)`` with ``rho = (PAE_nl / PAE_lin) / 10^(gap_db / 10)``.
    """
    for name, v in (("pae_nonlinear", pae_nonlinear), ("pae_linear", pae_linear)):
        if not (0.0 < v <= 1.0):
            raise ValueError(f"{name} must lie in (0, 1], got {v!r}")
    rho = (pae_nonlinear / pae_linear) / float(db_to_linear(gap_db))
    return rho, float(linear_to_db(rho))
