"""Seeded Monte-Carlo experiments over fading ensembles.

Every experiment draws its channels trial by trial from
``trial_rng(master_seed, trial_index)`` and processes them in fixed-size
chunks, so neither the worker count (``CE_THREADS`` or ``threads=``) nor the
scheduling order can change a single output bit. Means are taken with
:func:`math.fsum`, which is exact up to the final rounding and therefore
independent of summation order.
"""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from . import __version__
from .alphabets import (DauipAlphabet, Quadrature, RegionEnsemble, ergodic_mi_dauip,
                        ergodic_mi_uniform, optimize_dauip)
from .capacity import db_to_linear, kl_upper_bound_i1
from .doughnut import inner_radius_batch
from .fading import FadingModel, draw_channels

__all__ = [
    "ExperimentConfig",
    "ExperimentResult",
    "Ensemble",
    "RateUnreachable",
    "SCHEMES",
    "worker_count",
    "build_ensemble",
    "scheme_rates",
    "ergodic_rate",
    "min_snr_search",
    "mh_ratio_curve",
    "ergodic_rate_curves",
    "min_snr_for_rate",
    "array_power_gain",
    "outage_bounds",
    "outage_upper_bound_analytic",
    "exp_max_cdf",
    "mh_tail_check",
    "clopper_pearson",
    "loglog_slope",
]

CHUNK = 500  # trials per work item; fixed so results do not depend on workers

SCHEMES = ("mrt", "papc", "ce_uniform", "ce_dauip", "ce_epi")
RATE_METRICS = ("atpc", "papc", "epi_lower", "i2_upper", "mi_uniform", "mi_best_dauip")


class RateUnreachable(RuntimeError):
    pass


def worker_count(threads: int | None = None) -> int:
    if threads is None:
        env = os.environ.get("CE_THREADS", "").strip()
        threads = int(env) if env else 1
    return max(1, int(threads))


def _map_chunks(fn: Callable[[int, int], object], total: int, threads: int | None) -> list:
    spans = [(s, min(s + CHUNK, total)) for s in range(0, total, CHUNK)]
    workers = worker_count(threads)
    if workers == 1 or len(spans) == 1:
        return [fn(s, e) for s, e in spans]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda se: fn(*se), spans))


def _mean_se(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=float).ravel()
    n = v.size
    mean = math.fsum(v) / n
    if n < 2:
        return mean, 0.0
    var = math.fsum((v - mean) ** 2) / (n - 1)
    return mean, math.sqrt(var / n)


# ---------------------------------------------------------------------------
# configuration and results


@dataclass(frozen=True)
class ExperimentConfig:
    """Inputs shared by every experiment.

    ``fading`` is a model string (``rayleigh``, ``bounded:<B>``, ``dlos:<A>``).
    ``search_trials`` channels (a prefix of the ensemble) are used for the
    ring-alphabet search at each SNR; the chosen alphabet is then evaluated
    on all ``trials`` channels.
    """

    master_seed: int = 1
    trials: int = 10_000
    n_grid: tuple = (1, 2, 4, 16, 64)
    snr_grid_db: tuple = (0.0,)
    fading: str = "rayleigh"
    target_rate: float = 3.0
    metrics: tuple = RATE_METRICS
    schemes: tuple = ("mrt", "papc", "ce_uniform", "ce_dauip")
    l_max: int = 4
    alpha_grid: int = 32
    search_trials: int = 1000
    bracket_db: tuple = (-20.0, 25.0)
    bisection_iters: int = 40
    rate_tol: float = 0.01
    c_values: tuple = (0.5, 1.0)
    threads: int | None = None

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        for name in ("n_grid", "snr_grid_db"):
            grid = tuple(getattr(self, name))
            if not grid:
                raise ValueError(f"{name} must be nonempty")
            if any(b <= a for a, b in zip(grid, grid[1:])):
                raise ValueError(f"{name} must be strictly increasing")
            object.__setattr__(self, name, grid)
        if any(int(n) != n or n < 1 for n in self.n_grid):
            raise ValueError("antenna counts must be positive integers")
        unknown = set(self.schemes) - set(SCHEMES)
        if unknown:
            raise ValueError(f"unknown schemes {sorted(unknown)}; choose from {SCHEMES}")
        lo, hi = self.bracket_db
        if not lo < hi:
            raise ValueError("bracket_db must be (low, high) with low < high")
        if self.search_trials < 1 or self.l_max < 1 or self.alpha_grid < 1:
            raise ValueError("search_trials, l_max and alpha_grid must be positive")
        for name in ("metrics", "schemes", "c_values", "bracket_db"):
            object.__setattr__(self, name, tuple(getattr(self, name)))

    def model(self, n: int) -> FadingModel:
        from .fading import parse_fading

        return parse_fading(self.fading, int(n))


@dataclass
class ExperimentResult:
    """A table of rows plus the provenance needed to regenerate it."""

    experiment: str
    columns: tuple
    rows: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    def add(self, *values):
        if len(values) != len(self.columns):
            raise ValueError(f"expected {len(self.columns)} values, got {len(values)}")
        self.rows.append(tuple(values))

    def column(self, name: str) -> list:
        i = self.columns.index(name)
        return [r[i] for r in self.rows]

    def where(self, **match) -> list[dict]:
        out = []
        for r in self.rows:
            d = dict(zip(self.columns, r))
            if all(d[k] == v for k, v in match.items()):
                out.append(d)
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# experiment: {self.experiment}\n")
        for key, value in self.provenance.items():
            buf.write(f"# {key}: {value}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([_fmt(v) for v in row])
        return buf.getvalue()


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        return f"{v:.12g}"
    if isinstance(v, tuple):
        return " ".join(_fmt(x) for x in v)
    return str(v)


def _provenance(config: ExperimentConfig, **extra) -> dict:
    d = {"master_seed": config.master_seed, "version": __version__}
    cfg = asdict(config)
    cfg.pop("threads")
    d["config"] = ";".join(f"{k}={_fmt(tuple(v)) if isinstance(v, (list, tuple)) else v}"
                           for k, v in cfg.items())
    d.update(extra)
    return d


# ---------------------------------------------------------------------------
# ensembles


@dataclass(frozen=True)
class Ensemble:
    """Channel draws with their doughnut radii."""

    gains: np.ndarray
    inner: np.ndarray
    outer: np.ndarray
    norm2: np.ndarray

    @property
    def n_antennas(self) -> int:
        return self.gains.shape[1]

    def regions(self) -> RegionEnsemble:
        return RegionEnsemble(self.inner, self.outer)

    def head(self, k: int) -> "Ensemble":
        return Ensemble(self.gains[:k], self.inner[:k], self.outer[:k], self.norm2[:k])

    def __len__(self):
        return self.gains.shape[0]


def build_ensemble(model: FadingModel, master_seed: int, trials: int,
                   threads: int | None = None) -> Ensemble:
    """Draw ``trials`` channels and compute both doughnut radii for each."""

    def work(s, e):
        g = draw_channels(model, master_seed, e - s, start=s)
        return g, inner_radius_batch(g, seed=s)

    parts = _map_chunks(work, trials, threads)
    gains = np.concatenate([p[0] for p in parts])
    mags = np.abs(gains)
    outer = mags.sum(axis=1) / np.sqrt(model.n_antennas)
    inner = np.minimum(np.concatenate([p[1] for p in parts]), outer)
    return Ensemble(gains, inner, outer, np.sum(mags**2, axis=1))


# ---------------------------------------------------------------------------
# per-channel rates


@dataclass
class _DauipCache:
    """Best alphabet per SNR, so repeated evaluations reuse the search."""

    config: ExperimentConfig
    found: dict = field(default_factory=dict)

    def best(self, ens: Ensemble, snr: float, l_max: int | None = None):
        key = (len(ens), ens.n_antennas, float(snr), l_max)
        if key not in self.found:
            lm = self.config.l_max if l_max is None else l_max
            sub = ens.head(self.config.search_trials).regions()
            self.found[key] = optimize_dauip(sub, snr, l_max=lm, grid=self.config.alpha_grid)
        return self.found[key]


def scheme_rates(scheme: str, ens: Ensemble, snr: float, *, alphabet: DauipAlphabet | None = None,
                 threads: int | None = None, quad: Quadrature | None = None) -> np.ndarray:
    """Per-channel rate (bits) of one scheme at linear ``snr``.

    ``mrt`` and ``papc`` are the capacities under total and per-antenna
    average power; ``ce_uniform`` is the uniform-in-doughnut rate,
    ``ce_dauip`` the rate of ``alphabet``, and ``ce_epi`` the
    entropy-power lower bound on the uniform rate.
    """
    s = float(snr)
    if scheme in ("mrt", "atpc"):
        return np.log2(1.0 + s * ens.norm2)
    if scheme == "papc":
        return np.log2(1.0 + s * ens.outer**2)
    if scheme in ("ce_epi", "epi_lower"):
        return np.log2(1.0 + s * (ens.outer**2 - ens.inner**2) / np.e)
    if scheme == "i2_upper":
        return np.minimum(kl_upper_bound_i1(ens.outer, s), np.log2(1.0 + s * ens.outer**2))
    q = quad or Quadrature()
    if scheme in ("ce_uniform", "mi_uniform"):
        def work(a, b):
            return ergodic_mi_uniform(RegionEnsemble(ens.inner[a:b], ens.outer[a:b]), s, q,
                                      per_channel=True)
    elif scheme in ("ce_dauip", "mi_dauip"):
        if alphabet is None:
            raise ValueError("ce_dauip needs an alphabet")

        def work(a, b):
            return ergodic_mi_dauip(alphabet, RegionEnsemble(ens.inner[a:b], ens.outer[a:b]), s, q,
                                    per_channel=True)
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    return np.concatenate(_map_chunks(work, len(ens), threads))


def ergodic_rate(scheme: str, ens: Ensemble, snr: float, cache: _DauipCache | None = None,
                 threads: int | None = None) -> tuple[float, float, DauipAlphabet | None]:
    """Ensemble mean rate, its standard error, and the alphabet used (if any)."""
    alphabet = None
    if scheme == "ce_dauip":
        if cache is None:
            raise ValueError("ce_dauip needs a search cache")
        alphabet = cache.best(ens, snr).alphabet
    mean, se = _mean_se(scheme_rates(scheme, ens, snr, alphabet=alphabet, threads=threads))
    return mean, se, alphabet


def min_snr_search(rate_at_db: Callable[[float], float], target: float, bracket=(-20.0, 25.0),
                   iters: int = 40, rate_tol: float = 0.01) -> tuple[float, float, int]:
    """Bisection in dB for the smallest SNR whose rate reaches ``target``.

    Stops when the rate is within ``rate_tol`` of the target or after
    ``iters`` halvings. The bracket ends are only evaluated when the search
    runs into one of them (rates at the top end are the costliest to
    compute). Returns ``(snr_db, rate, evaluations)``.
    """
    lo, hi = map(float, bracket)
    edge_lo, edge_hi = lo, hi
    mid, r_mid = hi, float("nan")
    evals = 0
    hit = False
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        r_mid = rate_at_db(mid)
        evals += 1
        if abs(r_mid - target) <= rate_tol:
            hit = True
            break
        if r_mid < target:
            lo = mid
        else:
            hi = mid
    if not hit:
        if lo == edge_lo:
            r = rate_at_db(edge_lo)
            evals += 1
            if r >= target:
                raise RateUnreachable(f"rate {r:.4g} at {edge_lo} dB already exceeds {target}")
        if hi == edge_hi:
            r = rate_at_db(edge_hi)
            evals += 1
            if r < target:
                raise RateUnreachable(f"rate {r:.4g} at {edge_hi} dB is below the target {target}")
    return mid, r_mid, evals


# ---------------------------------------------------------------------------
# experiments


def mh_ratio_curve(config: ExperimentConfig) -> ExperimentResult:
    """Mean ``m/M`` per antenna count, next to the mean of its upper bound ``max|h| / ||h||_1``."""
    res = ExperimentResult("mh-ratio", ("n", "mean_m_over_M", "stderr_m_over_M",
                                        "mean_linf_over_l1", "stderr_linf_over_l1"),
                           provenance=_provenance(config))
    for n in config.n_grid:
        ens = build_ensemble(config.model(n), config.master_seed, config.trials, config.threads)
        mags = np.abs(ens.gains)
        ratio = np.where(ens.outer > 0, ens.inner / np.where(ens.outer > 0, ens.outer, 1.0), 0.0)
        bound = mags.max(axis=1) / mags.sum(axis=1)
        res.add(int(n), *_mean_se(ratio), *_mean_se(bound))
    return res


def ergodic_rate_curves(config: ExperimentConfig) -> ExperimentResult:
    """Ensemble-mean rates versus SNR.

    Metrics: ``atpc``, ``papc``, ``epi_lower``, ``i2_upper``, ``mi_uniform``,
    ``mi_best_dauip`` and ``mi_dauip_<L>`` (best alphabet with exactly ``L``
    rings; ``L = 1`` uses the outer edge ``alpha = 1``). The ring positions
    depend on the SNR only, not on the channel.
    """
    res = ExperimentResult("rate-curve", ("n", "snr_db", "metric", "value", "stderr", "alphas"),
                           provenance=_provenance(config))
    cache = _DauipCache(config)
    for n in config.n_grid:
        ens = build_ensemble(config.model(n), config.master_seed, config.trials, config.threads)
        for db in config.snr_grid_db:
            s = float(db_to_linear(db))
            for metric in config.metrics:
                alphas = ()
                if metric == "mi_best_dauip":
                    alph = cache.best(ens, s).alphabet
                    vals = scheme_rates("ce_dauip", ens, s, alphabet=alph, threads=config.threads)
                    alphas = alph.alphas
                elif metric.startswith("mi_dauip_"):
                    n_rings = int(metric.rsplit("_", 1)[1])
                    if n_rings == 1:
                        alph = DauipAlphabet((1.0,))
                    else:
                        found = cache.best(ens, s, l_max=n_rings).per_ring_count[n_rings][0]
                        alph = DauipAlphabet(found)
                    vals = scheme_rates("ce_dauip", ens, s, alphabet=alph, threads=config.threads)
                    alphas = alph.alphas
                else:
                    vals = scheme_rates(metric, ens, s, threads=config.threads)
                res.add(int(n), float(db), metric, *_mean_se(vals), alphas)
    return res


def _min_snr_rows(config: ExperimentConfig, res: ExperimentResult, extra: Callable | None = None):
    cache = _DauipCache(config)
    out = {}
    for n in config.n_grid:
        ens = build_ensemble(config.model(n), config.master_seed, config.trials, config.threads)
        for scheme in config.schemes:
            last = {}

            def rate(db, scheme=scheme, ens=ens, last=last):
                mean, se, alph = ergodic_rate(scheme, ens, float(db_to_linear(db)), cache,
                                              config.threads)
                last[db] = (se, alph)
                return mean

            db, r, evals = min_snr_search(rate, config.target_rate, config.bracket_db,
                                          config.bisection_iters, config.rate_tol)
            se, alph = last[db]
            out[(int(n), scheme)] = db
            res.add(int(n), scheme, db, r, se, evals, alph.alphas if alph else ())
        if extra is not None:
            extra(n, ens)
    return out


def min_snr_for_rate(config: ExperimentConfig) -> ExperimentResult:
    """Smallest SNR (dB) at which each scheme's ergodic rate reaches ``target_rate``."""
    res = ExperimentResult("min-snr", ("n", "scheme", "min_snr_db", "rate", "rate_stderr",
                                       "evaluations", "alphas"),
                           provenance=_provenance(config))
    _min_snr_rows(config, res)
    return res


def array_power_gain(config: ExperimentConfig) -> ExperimentResult:
    """Array power gain per scheme.

    ``gain_db`` is the SNR saving relative to the smallest antenna count in
    the grid and ``step_db`` the change from the previous count. Rows with
    scheme ``mrt_per_channel`` carry the median of the per-realization MRT
    gain ``sum|h_i|^2 / |h_1|^2`` in dB (its mean is infinite under Rayleigh
    fading).
    """
    base = ExperimentResult("apg", ("n", "scheme", "min_snr_db", "rate", "rate_stderr",
                                    "evaluations", "alphas"))
    medians = {}

    def per_channel(n, ens):
        g = np.abs(ens.gains) ** 2
        medians[int(n)] = float(np.median(10 * np.log10(g.sum(axis=1) / g[:, 0])))

    found = _min_snr_rows(config, base, per_channel)
    res = ExperimentResult("apg", ("n", "scheme", "min_snr_db", "gain_db", "step_db"),
                           provenance=_provenance(config))
    ns = [int(n) for n in config.n_grid]
    for scheme in config.schemes:
        for i, n in enumerate(ns):
            cur = found[(n, scheme)]
            step = cur - found[(ns[i - 1], scheme)] if i > 0 else float("nan")
            res.add(n, scheme, cur, found[(ns[0], scheme)] - cur, step)
    for n in ns:
        res.add(n, "mrt_per_channel", float("nan"), medians[n], float("nan"))
    return res


def clopper_pearson(k: int, n: int, level: float = 0.95) -> tuple[float, float]:
    """Exact binomial confidence interval for ``k`` events in ``n`` trials."""
    a = 1.0 - level
    lo = 0.0 if k == 0 else float(stats.beta.ppf(a / 2, k, n - k + 1))
    hi = 1.0 if k == n else float(stats.beta.ppf(1 - a / 2, k + 1, n - k))
    return lo, hi


def outage_upper_bound_analytic(n: int, snr, rate: float):
    """``(1 - exp(-2 e N (2^R - 1) / snr))^(N - 1)``."""
    c = 2.0 * np.e * n * (2.0**rate - 1.0) / np.asarray(snr, dtype=float)
    return (-np.expm1(-c)) ** (n - 1)


def exponential_spacings(gains) -> np.ndarray:
    """``Y_i = (N - i + 1)(Z_(i) - Z_(i-1))`` from the sorted ``Z = |h_i|^2``.

    For i.i.d. CN(0, 1) gains these are i.i.d. unit exponentials.
    """
    z = np.sort(np.abs(np.atleast_2d(gains)) ** 2, axis=1)
    n = z.shape[1]
    dz = np.diff(z, axis=1, prepend=0.0)
    return dz * (n - np.arange(n))


def loglog_slope(snr_db, prob) -> float:
    """Least-squares slope of ``-log10(prob)`` against ``log10(snr)``."""
    x = np.asarray(snr_db, dtype=float) / 10.0
    y = -np.log10(np.asarray(prob, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


def outage_bounds(config: ExperimentConfig) -> ExperimentResult:
    """Outage-probability bounds at rate ``target_rate`` on a common channel set.

    Bounds per (N, SNR): ``lower`` = P(I2 <= R); ``upper`` = P(EPI rate <= R);
    ``upper_linf`` the same with ``m`` replaced by its upper bound
    ``max|h| / sqrt(N)``; ``spacings_mc`` = P(Y_i <= c for i < N) from the
    channel's exponential spacings; ``analytic`` the closed form these lead to.
    """
    res = ExperimentResult("outage", ("n", "snr_db", "bound", "estimate", "stderr",
                                      "ci_low", "ci_high", "events"),
                           provenance=_provenance(config))
    rate = config.target_rate
    for n in config.n_grid:
        ens = build_ensemble(config.model(n), config.master_seed, config.trials, config.threads)
        t = len(ens)
        mags = np.abs(ens.gains)
        area_linf = (mags.sum(axis=1) ** 2 - mags.max(axis=1) ** 2) / n
        y = exponential_spacings(ens.gains)[:, : max(n - 1, 0)]
        for db in config.snr_grid_db:
            s = float(db_to_linear(db))
            i2 = scheme_rates("i2_upper", ens, s)
            epi = scheme_rates("ce_epi", ens, s)
            c = 2.0 * np.e * n * (2.0**rate - 1.0) / s
            events = {
                "lower": i2 <= rate,
                "upper": epi <= rate,
                "upper_linf": np.log2(1.0 + s * area_linf / np.e) <= rate,
                "spacings_mc": np.all(y <= c, axis=1) if n > 1 else np.ones(t, bool),
            }
            for name, ev in events.items():
                k = int(np.count_nonzero(ev))
                p = k / t
                res.add(int(n), float(db), name, p, math.sqrt(p * (1 - p) / t),
                        *clopper_pearson(k, t), k)
            a = float(outage_upper_bound_analytic(n, s, rate))
            res.add(int(n), float(db), "analytic", a, 0.0, a, a, -1)
    return res


def exp_max_cdf(n: int, c: float) -> float:
    """``P(max of N unit exponentials <= c^2 log(N)^2) = (1 - N^(-c^2 log N))^N``."""
    x = (c * math.log(n)) ** 2
    return (-math.expm1(-x)) ** n


def mh_tail_check(config: ExperimentConfig) -> ExperimentResult:
    """Empirical ``P(m(h) >= c log(N) / sqrt(N))`` and the exponential-maximum identity."""
    res = ExperimentResult("mh-tail", ("n", "c", "metric", "estimate", "stderr",
                                       "ci_low", "ci_high", "reference"),
                           provenance=_provenance(config))
    for n in config.n_grid:
        ens = build_ensemble(config.model(n), config.master_seed, config.trials, config.threads)
        t = len(ens)
        zmax = np.max(np.abs(ens.gains) ** 2, axis=1)
        for c in config.c_values:
            thr = c * math.log(n) / math.sqrt(n)
            k = int(np.count_nonzero(ens.inner >= thr))
            p = k / t
            res.add(int(n), float(c), "tail_prob", p, math.sqrt(p * (1 - p) / t),
                    *clopper_pearson(k, t), float("nan"))
            k2 = int(np.count_nonzero(zmax <= (c * math.log(n)) ** 2))
            p2 = k2 / t
            res.add(int(n), float(c), "exp_max_cdf", p2, math.sqrt(p2 * (1 - p2) / t),
                    *clopper_pearson(k2, t), exp_max_cdf(n, c))
    return res
