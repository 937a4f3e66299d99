"""Seedable channel realizations for the fading families used throughout.

Every trial owns its own generator, derived from ``(master_seed, trial_index)``
through :class:`numpy.random.SeedSequence`, so a channel draw is a pure
function of that pair no matter how trials are split across workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "FadingModel",
    "ChannelVector",
    "trial_rng",
    "draw_channel",
    "draw_channels",
    "parse_fading",
]

_KINDS = ("rayleigh", "bounded", "dlos")


@dataclass(frozen=True)
class FadingModel:
    """Channel distribution for an ``n_antennas``-element transmit array.

    ``kind`` is one of ``"rayleigh"`` (i.i.d. CN(0, 1) gains), ``"bounded"``
    (magnitude uniform on ``[0, param]``) or ``"dlos"`` (all magnitudes equal
    to ``param``). Phases are uniform on ``[-pi, pi)`` in every case.
    """

    kind: str
    n_antennas: int
    param: float = 1.0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown fading kind {self.kind!r}; expected one of {_KINDS}")
        if int(self.n_antennas) != self.n_antennas or self.n_antennas < 1:
            raise ValueError(f"n_antennas must be a positive integer, got {self.n_antennas!r}")
        if self.kind != "rayleigh" and not self.param > 0:
            raise ValueError(f"{self.kind} fading needs a positive parameter, got {self.param!r}")

    def with_antennas(self, n: int) -> "FadingModel":
        return FadingModel(self.kind, n, self.param)

    @property
    def label(self) -> str:
        if self.kind == "rayleigh":
            return "rayleigh"
        return f"{self.kind}:{self.param:g}"


def parse_fading(text: str, n_antennas: int = 1) -> FadingModel:
    """Parse ``rayleigh``, ``bounded:<B>`` or ``dlos:<A>``."""
    kind, _, arg = text.strip().lower().partition(":")
    if kind == "rayleigh":
        if arg:
            raise ValueError("rayleigh fading takes no parameter")
        return FadingModel("rayleigh", n_antennas)
    if kind in ("bounded", "dlos"):
        if not arg:
            raise ValueError(f"{kind} fading needs a parameter, e.g. {kind}:1.0")
        try:
            value = float(arg)
        except ValueError:
            raise ValueError(f"bad {kind} parameter {arg!r}") from None
        return FadingModel(kind, n_antennas, value)
    raise ValueError(f"unknown fading model {text!r}")


@dataclass(frozen=True)
class ChannelVector:
    """Complex gains ``h`` with their l1, l2 and l-infinity norms cached."""

    gains: np.ndarray
    l1: float = field(init=False)
    l2: float = field(init=False)
    linf: float = field(init=False)

    def __post_init__(self):
        g = np.atleast_1d(np.asarray(self.gains, dtype=complex))
        if g.ndim != 1 or g.size == 0:
            raise ValueError("channel must be a nonempty 1-D vector")
        g = g.copy()
        g.flags.writeable = False
        mags = np.abs(g)
        object.__setattr__(self, "gains", g)
        object.__setattr__(self, "l1", float(mags.sum()))
        linf = float(mags.max())
        # scale by the largest magnitude so tiny or huge gains do not under/overflow
        l2 = linf * float(np.sqrt(np.sum((mags / linf) ** 2))) if linf > 0 else 0.0
        object.__setattr__(self, "l2", l2)
        object.__setattr__(self, "linf", linf)

    @property
    def n(self) -> int:
        return self.gains.size

    @property
    def magnitudes(self) -> np.ndarray:
        return np.abs(self.gains)

    def __len__(self):
        return self.gains.size


def as_channel(h) -> ChannelVector:
    return h if isinstance(h, ChannelVector) else ChannelVector(h)


def trial_rng(master_seed: int, trial_index: int) -> np.random.Generator:
    """Independent generator for one Monte-Carlo trial."""
    if master_seed < 0 or trial_index < 0:
        raise ValueError("seed and trial index must be nonnegative")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([master_seed, trial_index])))


def _draw_gains(model: FadingModel, rng: np.random.Generator) -> np.ndarray:
    n = model.n_antennas
    if model.kind == "rayleigh":
        z = rng.standard_normal((n, 2))
        return (z[:, 0] + 1j * z[:, 1]) * np.sqrt(0.5)
    phase = rng.uniform(-np.pi, np.pi, n)
    if model.kind == "bounded":
        mag = rng.uniform(0.0, model.param, n)
    else:
        mag = np.full(n, model.param)
    return mag * np.exp(1j * phase)


def draw_channel(model: FadingModel, rng: np.random.Generator) -> ChannelVector:
    return ChannelVector(_draw_gains(model, rng))


def draw_channels(model: FadingModel, master_seed: int, trials: int, start: int = 0) -> np.ndarray:
    """Gains for trials ``start .. start+trials-1`` as a ``(trials, N)`` array."""
    out = np.empty((trials, model.n_antennas), dtype=complex)
    for k in range(trials):
        out[k] = _draw_gains(model, trial_rng(master_seed, start + k))
    return out
