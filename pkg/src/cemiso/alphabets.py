"""Ring alphabets on the doughnut and their mutual information.

The channel seen by a symbol ``u`` in the doughnut is ``y = sqrt(snr) u + w``
with ``w ~ CN(0, 1)``. Every input considered here is circularly symmetric,
so the output density depends on ``|y|`` only and the output entropy is a
one-dimensional radial integral:

* a ring of radius ``a`` gives ``p(r) = exp(-(r - a)^2) i0e(2 a r) / pi``;
* the uniform annulus ``a <= |x| <= b`` gives
  ``p(r) = [Q1(sqrt2 r, sqrt2 a) - Q1(sqrt2 r, sqrt2 b)] / (pi (b^2 - a^2))``
  with the Marcum function ``Q1``.

``I(y; u) = h(y) - log2(pi e)``. The radial integral is done with composite
Gauss-Legendre panels, vectorized over a batch of channels.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy import special

from .doughnut import DoughnutRegion, inner_radius_batch

__all__ = [
    "DauipAlphabet",
    "Quadrature",
    "MiEstimate",
    "RegionEnsemble",
    "DauipSearchResult",
    "DegenerateRegion",
    "sample_symbol",
    "ring_output_density",
    "annulus_output_density",
    "mi_rings_batch",
    "mi_annulus_batch",
    "mutual_info_dauip",
    "mutual_info_uniform_doughnut",
    "mutual_info_monte_carlo",
    "ergodic_mi_dauip",
    "ergodic_mi_uniform",
    "optimize_dauip",
]

LOG2_PI_E = np.log2(np.pi * np.e)
_CHUNK = 2048


class DegenerateRegion(ValueError):
    pass


@dataclass(frozen=True)
class DauipAlphabet:
    """``L`` rings at relative positions ``alphas`` in (0, 1] with probabilities ``probs``.

    Ring ``l`` sits at radius ``m + alphas[l] (M - m)`` of a doughnut ``[m, M]``.
    """

    alphas: tuple
    probs: tuple | None = None

    def __post_init__(self):
        a = tuple(float(x) for x in np.atleast_1d(self.alphas))
        if not a:
            raise ValueError("need at least one ring")
        if not all(0.0 < x <= 1.0 for x in a):
            raise ValueError(f"alphas must lie in (0, 1], got {a}")
        if any(y <= x for x, y in zip(a, a[1:])):
            raise ValueError(f"alphas must be strictly increasing, got {a}")
        p = (1.0 / len(a),) * len(a) if self.probs is None else tuple(float(x) for x in self.probs)
        if len(p) != len(a) or min(p) < 0.0 or abs(sum(p) - 1.0) > 1e-12:
            raise ValueError(f"probs must be {len(a)} nonnegative values summing to 1, got {p}")
        object.__setattr__(self, "alphas", a)
        object.__setattr__(self, "probs", p)

    @property
    def ring_count(self) -> int:
        return len(self.alphas)

    def radii(self, inner, outer) -> np.ndarray:
        """Ring radii for one doughnut, or a ``(C, L)`` array for arrays of radii."""
        inner = np.asarray(inner, dtype=float)
        outer = np.asarray(outer, dtype=float)
        a = np.asarray(self.alphas)
        return inner[..., None] + a * (outer - inner)[..., None]


def sample_symbol(alphabet: DauipAlphabet, region: DoughnutRegion, rng: np.random.Generator,
                  size=None):
    """Draw symbols: a ring by its probability, then a uniform phase."""
    radii = alphabet.radii(region.inner, region.outer)
    ring = rng.choice(alphabet.ring_count, size=size, p=alphabet.probs)
    phase = rng.uniform(-np.pi, np.pi, size=size)
    return radii[ring] * np.exp(1j * phase)


# ---------------------------------------------------------------------------
# densities and quadrature


@dataclass(frozen=True)
class Quadrature:
    """Composite Gauss-Legendre rule on ``[max(0, lo - tail), hi + tail]``.

    Lengths are in units of the noise standard deviation per complex
    dimension (``w ~ CN(0, 1)``), so one panel per unit resolves the output
    density well.
    """

    panels_per_unit: float = 1.0
    nodes_per_panel: int = 8
    tail: float = 9.0

    def refined(self) -> "Quadrature":
        return Quadrature(2.0 * self.panels_per_unit, self.nodes_per_panel, self.tail)


DEFAULT_QUAD = Quadrature()


def _radial_grid(lo, hi, quad: Quadrature):
    """Nodes ``r`` and area weights ``2 pi r dr`` per row, shape ``(C, K)``."""
    lo = np.maximum(0.0, np.asarray(lo, dtype=float) - quad.tail)
    hi = np.asarray(hi, dtype=float) + quad.tail
    npan = max(1, int(np.ceil(np.max(hi - lo) * quad.panels_per_unit)))
    x, w = np.polynomial.legendre.leggauss(quad.nodes_per_panel)
    edges = lo[:, None] + (hi - lo)[:, None] * np.linspace(0.0, 1.0, npan + 1)
    half = 0.5 * np.diff(edges, axis=1)
    mid = 0.5 * (edges[:, :-1] + edges[:, 1:])
    r = (mid[:, :, None] + half[:, :, None] * x).reshape(lo.size, -1)
    wr = (half[:, :, None] * w).reshape(lo.size, -1) * 2.0 * np.pi * r
    return r, wr


def _entropy_bits(p, wr):
    return -np.sum(wr * special.xlogy(p, p), axis=-1) / np.log(2.0)


def ring_output_density(r, radius):
    """Output density at ``|y| = r`` for a uniform-phase input of modulus ``radius``."""
    r = np.asarray(r, dtype=float)
    radius = np.asarray(radius, dtype=float)
    return np.exp(-((r - radius) ** 2)) * special.i0e(2.0 * radius * r) / np.pi


def _marcum_cdf(r, a):
    """``1 - Q1(sqrt2 r, sqrt2 a)`` via the noncentral chi-square cdf."""
    return special.chndtr(2.0 * a * a, 2.0, 2.0 * r * r)


_THIN = 0.5  # below this b^2 - a^2 the Marcum difference loses digits


def mi_rings_batch(radii, probs=None, quad: Quadrature = DEFAULT_QUAD) -> np.ndarray:
    """Mutual information (bits) of ring inputs, one row per channel.

    ``radii`` has shape ``(C, L)`` and is already scaled by ``sqrt(snr)``.
    """
    radii = np.atleast_2d(np.asarray(radii, dtype=float))
    c, n_rings = radii.shape
    p = np.full(n_rings, 1.0 / n_rings) if probs is None else np.asarray(probs, dtype=float)
    out = np.empty(c)
    for s in range(0, c, _CHUNK):
        rad = radii[s:s + _CHUNK]
        r, wr = _radial_grid(rad.min(axis=1), rad.max(axis=1), quad)
        dens = np.einsum("l,clk->ck", p, ring_output_density(r[:, None, :], rad[:, :, None]))
        out[s:s + _CHUNK] = _entropy_bits(dens, wr) - LOG2_PI_E
    return out


def mi_annulus_batch(inner, outer, quad: Quadrature = DEFAULT_QUAD) -> np.ndarray:
    """Mutual information (bits) of inputs uniform on scaled annuli ``[inner, outer]``."""
    a = np.atleast_1d(np.asarray(inner, dtype=float))
    b = np.atleast_1d(np.asarray(outer, dtype=float))
    out = np.empty(a.size)
    for s in range(0, a.size, _CHUNK):
        aa, bb = a[s:s + _CHUNK], b[s:s + _CHUNK]
        r, wr = _radial_grid(aa, bb, quad)
        dens = _annulus_density_rows(r, aa, bb)
        out[s:s + _CHUNK] = _entropy_bits(dens, wr) - LOG2_PI_E
    return out


def _annulus_density_rows(r, a, b):
    """Row-wise annulus density: ``r`` is ``(C, K)``, ``a`` and ``b`` are ``(C,)``."""
    area = b * b - a * a
    thick = area >= _THIN
    dens = np.empty_like(r)
    if thick.any():
        at, bt, rt = a[thick, None], b[thick, None], r[thick]
        dens[thick] = (_marcum_cdf(rt, bt) - _marcum_cdf(rt, at)) / (np.pi * (bt * bt - at * at))
    thin = ~thick
    if thin.any():
        x, w = np.polynomial.legendre.leggauss(16)
        at, bt = a[thin], b[thin]
        rho = 0.5 * (at + bt)[:, None] + 0.5 * (bt - at)[:, None] * x  # (c, 16)
        # 2 rho / (b^2 - a^2) * (b - a) / 2 = rho / (a + b)
        s = at + bt
        wt = w * np.where(s[:, None] > 0, rho / np.where(s > 0, s, 1.0)[:, None], 0.5)
        dens[thin] = np.einsum("cq,ckq->ck", wt,
                               ring_output_density(r[thin][:, :, None], rho[:, None, :]))
    return dens


def annulus_output_density(r, inner, outer):
    """Output density for an input uniform on the annulus ``inner <= |x| <= outer``."""
    r = np.asarray(r, dtype=float)
    shape = r.shape
    rr = r.reshape(1, -1)
    dens = _annulus_density_rows(rr, np.array([float(inner)]), np.array([float(outer)]))
    return dens.reshape(shape)


# ---------------------------------------------------------------------------
# single-region estimates


class MiEstimate(NamedTuple):
    """Mutual information in bits and its standard error.

    For quadrature estimates ``stderr`` is the change seen when the radial
    grid is refined (a bias bound); for ensemble averages it is the sample
    standard error over channels; for Monte-Carlo estimates it is the usual
    sampling error.
    """

    value: float
    stderr: float


def _scaled(region: DoughnutRegion, snr):
    s = np.sqrt(float(snr))
    return s * region.inner, s * region.outer


def mutual_info_dauip(alphabet: DauipAlphabet, region: DoughnutRegion, snr,
                      quad: Quadrature = DEFAULT_QUAD) -> MiEstimate:
    if not float(snr) > 0:
        raise ValueError("snr must be positive")
    a, b = _scaled(region, snr)
    radii = alphabet.radii(a, b)[None, :]
    v = float(mi_rings_batch(radii, alphabet.probs, quad)[0])
    v2 = float(mi_rings_batch(radii, alphabet.probs, quad.refined())[0])
    if not np.isfinite(v):
        raise FloatingPointError("non-finite output density")
    return MiEstimate(v2, abs(v2 - v))


def mutual_info_uniform_doughnut(region: DoughnutRegion, snr,
                                 quad: Quadrature = DEFAULT_QUAD) -> MiEstimate:
    if not float(snr) > 0:
        raise ValueError("snr must be positive")
    if region.outer <= region.inner:
        raise DegenerateRegion("uniform input needs a doughnut of positive area")
    a, b = _scaled(region, snr)
    v = float(mi_annulus_batch([a], [b], quad)[0])
    v2 = float(mi_annulus_batch([a], [b], quad.refined())[0])
    if not np.isfinite(v):
        raise FloatingPointError("non-finite output density")
    return MiEstimate(v2, abs(v2 - v))


def mutual_info_monte_carlo(region: DoughnutRegion, snr, *, alphabet: DauipAlphabet | None = None,
                            samples: int = 100_000, seed: int = 0) -> MiEstimate:
    """Sample-mean estimate ``E[-log2 p(y)] - log2(pi e)`` with its standard error.

    Inputs are drawn from ``alphabet`` or, when it is ``None``, uniformly on
    the doughnut. Serves as an independent check of the radial quadrature.
    """
    rng = np.random.default_rng(seed)
    a, b = _scaled(region, snr)
    if alphabet is None:
        rad = np.sqrt(rng.uniform(a * a, b * b, samples))
    else:
        radii = alphabet.radii(a, b)
        rad = radii[rng.choice(alphabet.ring_count, size=samples, p=alphabet.probs)]
    x = rad * np.exp(1j * rng.uniform(-np.pi, np.pi, samples))
    w = (rng.standard_normal(samples) + 1j * rng.standard_normal(samples)) * np.sqrt(0.5)
    r = np.abs(x + w)
    if alphabet is None:
        p = annulus_output_density(r, a, b)
    else:
        radii = alphabet.radii(a, b)
        p = np.asarray(alphabet.probs) @ ring_output_density(r[None, :], radii[:, None])
    vals = -np.log2(p)
    return MiEstimate(float(vals.mean() - LOG2_PI_E), float(vals.std(ddof=1) / np.sqrt(samples)))


# ---------------------------------------------------------------------------
# channel ensembles


@dataclass(frozen=True)
class RegionEnsemble:
    """Inner and outer doughnut radii of a channel ensemble."""

    inner: np.ndarray
    outer: np.ndarray

    def __post_init__(self):
        inner = np.atleast_1d(np.asarray(self.inner, dtype=float))
        outer = np.atleast_1d(np.asarray(self.outer, dtype=float))
        if inner.shape != outer.shape or inner.ndim != 1:
            raise ValueError("inner and outer must be 1-D arrays of equal length")
        if inner.size == 0:
            raise ValueError("empty ensemble")
        object.__setattr__(self, "inner", inner)
        object.__setattr__(self, "outer", outer)

    @classmethod
    def from_gains(cls, gains, inner=None, **inner_opts) -> "RegionEnsemble":
        g = np.atleast_2d(np.asarray(gains, dtype=complex))
        outer = np.abs(g).sum(axis=1) / np.sqrt(g.shape[1])
        if inner is None:
            inner = inner_radius_batch(g, **inner_opts)
        return cls(np.minimum(inner, outer), outer)

    @classmethod
    def from_regions(cls, regions: Sequence[DoughnutRegion]) -> "RegionEnsemble":
        return cls(np.array([r.inner for r in regions]), np.array([r.outer for r in regions]))

    def __len__(self):
        return self.inner.size

    def head(self, k: int) -> "RegionEnsemble":
        return RegionEnsemble(self.inner[:k], self.outer[:k])


def _mean_se(values) -> MiEstimate:
    v = np.asarray(values, dtype=float)
    se = float(v.std(ddof=1) / np.sqrt(v.size)) if v.size > 1 else 0.0
    return MiEstimate(float(np.mean(v)), se)


def ergodic_mi_dauip(alphabet: DauipAlphabet, ensemble: RegionEnsemble, snr,
                     quad: Quadrature = DEFAULT_QUAD, *, per_channel: bool = False):
    s = np.sqrt(float(snr))
    vals = mi_rings_batch(alphabet.radii(s * ensemble.inner, s * ensemble.outer),
                          alphabet.probs, quad)
    return vals if per_channel else _mean_se(vals)


def ergodic_mi_uniform(ensemble: RegionEnsemble, snr, quad: Quadrature = DEFAULT_QUAD, *,
                       per_channel: bool = False):
    """Uniform-in-doughnut rate averaged over channels (zero-area doughnuts act as rings)."""
    s = np.sqrt(float(snr))
    vals = mi_annulus_batch(s * ensemble.inner, s * ensemble.outer, quad)
    return vals if per_channel else _mean_se(vals)


# ---------------------------------------------------------------------------
# alphabet search


@dataclass(frozen=True)
class DauipSearchResult:
    alphabet: DauipAlphabet
    mean_mi: float
    per_ring_count: dict = field(default_factory=dict)

    @property
    def ring_count(self) -> int:
        return self.alphabet.ring_count

    @property
    def alphas(self) -> tuple:
        return self.alphabet.alphas


class _Kernels:
    """Ring output densities for every grid position, per channel."""

    def __init__(self, ensemble: RegionEnsemble, snr, grid: np.ndarray, quad: Quadrature):
        s = np.sqrt(float(snr))
        a, b = s * ensemble.inner, s * ensemble.outer
        self.r, self.wr = _radial_grid(a, b, quad)
        radii = a[:, None] + grid * (b - a)[:, None]  # (C, G)
        self.k = ring_output_density(self.r[:, None, :], radii[:, :, None])  # (C, G, K)
        self.cache = {}

    def mean_mi(self, idx) -> float:
        idx = tuple(idx)
        if idx not in self.cache:
            dens = self.k[:, list(idx), :].mean(axis=1)
            self.cache[idx] = float(np.mean(_entropy_bits(dens, self.wr) - LOG2_PI_E))
        return self.cache[idx]


def optimize_dauip(ensemble: RegionEnsemble, snr, *, l_max: int = 4, grid=32,
                   quad: Quadrature = DEFAULT_QUAD, exhaustive_max_rings: int = 2,
                   tie_tol: float = 1e-9) -> DauipSearchResult:
    """Search ring count and positions maximizing the ensemble-mean rate.

    ``grid`` is a point count (positions ``k / grid``, ``k = 1..grid``) or an
    explicit increasing sequence in (0, 1]. Ring counts up to
    ``exhaustive_max_rings`` are searched exhaustively; larger counts use
    coordinate ascent on the grid, started from the best smaller alphabet
    with one ring inserted. A larger ring count must beat the best smaller
    one by more than ``tie_tol`` bits to be chosen. Among equal candidates the
    one listed first wins, and candidates are listed from the outer edge
    inwards.
    """
    if len(ensemble) == 0:
        raise ValueError("empty ensemble")
    if l_max < 1:
        raise ValueError("l_max must be at least 1")
    g = np.arange(1, int(grid) + 1) / int(grid) if np.isscalar(grid) else np.asarray(grid, float)
    if g.ndim != 1 or g.size == 0 or np.any(np.diff(g) <= 0) or g[0] <= 0 or g[-1] > 1:
        raise ValueError("alpha grid must be increasing within (0, 1]")
    n_grid = g.size
    kern = _Kernels(ensemble, snr, g, quad)

    def rank(combo):
        # outer rings first: compare the reversed index tuples, larger first
        return tuple(-i for i in reversed(combo))

    per_l = {}
    best_combo, best_val = None, -np.inf
    prev = None
    for n_rings in range(1, min(l_max, n_grid) + 1):
        if n_rings <= exhaustive_max_rings:
            combos = sorted(itertools.combinations(range(n_grid), n_rings), key=rank)
            top, top_val = None, -np.inf
            for combo in combos:
                v = kern.mean_mi(combo)
                if v > top_val:
                    top, top_val = combo, v
        else:
            top, top_val = _coordinate_ascent(kern, prev, n_grid)
        per_l[n_rings] = (tuple(float(g[i]) for i in top), top_val)
        if top_val > best_val + tie_tol:
            best_combo, best_val = top, top_val
        prev = top
    alphabet = DauipAlphabet(tuple(float(g[i]) for i in best_combo))
    return DauipSearchResult(alphabet, best_val, per_l)


def _coordinate_ascent(kern: _Kernels, start, n_grid: int, max_rounds: int = 50):
    # insert one ring wherever it helps most
    used = set(start)
    cand = [tuple(sorted(start + (i,))) for i in range(n_grid - 1, -1, -1) if i not in used]
    if not cand:
        return start, kern.mean_mi(start)
    combo = max(cand, key=kern.mean_mi)
    val = kern.mean_mi(combo)
    for _ in range(max_rounds):
        improved = False
        for pos in range(len(combo) - 1, -1, -1):
            lo = combo[pos - 1] + 1 if pos > 0 else 0
            hi = combo[pos + 1] - 1 if pos + 1 < len(combo) else n_grid - 1
            for i in range(hi, lo - 1, -1):
                trial = combo[:pos] + (i,) + combo[pos + 1:]
                v = kern.mean_mi(trial)
                if v > val + 1e-12:
                    combo, val, improved = trial, v, True
        if not improved:
            break
    return combo, val
