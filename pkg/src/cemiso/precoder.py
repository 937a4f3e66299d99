"""Constant-envelope precoders: phases that place a target symbol exactly.

Given a channel ``h`` and a symbol ``u`` inside its doughnut, every solver
returns phases ``theta`` with ``sum_i h_i exp(j theta_i) / sqrt(N) == u`` up to
a residual that is always recomputed from scratch.

Solvers
-------
solve_closed_form_n2, solve_closed_form_n3
    Triangle constructions for two and three antennas.
solve_homotopy
    Continuation from the inner-radius witness to the co-phased vector,
    with bisection on the squared modulus along the path.
solve_coord_descent
    Cyclic single-angle descent on the error norm.
solve_dfs_two_step
    Depth-first search over discretized admissible angle sets, polished by
    coordinate descent. Meant for 3 < N <= 10.
dispatch_solve
    Picks one of the above by array size, with homotopy as the fallback.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from ._descent import cyclic_descent
from .doughnut import InnerRadius, inner_radius, inner_radius_batch, outer_radius, wrap_phase
from .fading import ChannelVector, as_channel

__all__ = [
    "EPS_SOLVE",
    "Solver",
    "PhaseSolution",
    "DispatchPolicy",
    "PrecoderError",
    "TargetOutsideDoughnut",
    "BracketFailure",
    "SearchExhausted",
    "residual",
    "homotopy_path",
    "solve_homotopy",
    "split_angle_init",
    "solve_coord_descent",
    "admissible_arcs",
    "solve_dfs_two_step",
    "closed_form_n2_branches",
    "solve_closed_form_n2",
    "solve_closed_form_n3",
    "dispatch_solve",
]

#: acceptance threshold on the residual, relative to the outer radius
EPS_SOLVE = 1e-9


class Solver(str, enum.Enum):
    HOMOTOPY = "homotopy"
    COORD_DESCENT = "coord_descent"
    DFS_TWO_STEP = "dfs_two_step"
    CLOSED_FORM_N2 = "closed_form_n2"
    CLOSED_FORM_N3 = "closed_form_n3"


class PrecoderError(RuntimeError):
    pass


class TargetOutsideDoughnut(PrecoderError, ValueError):
    pass


class BracketFailure(PrecoderError):
    pass


class SearchExhausted(PrecoderError):
    pass


def residual(h, phases, u) -> float:
    """|u - sum_i h_i exp(j theta_i) / sqrt(N)|."""
    g = as_channel(h).gains
    s = np.sum(g * np.exp(1j * np.asarray(phases, dtype=float))) / np.sqrt(g.size)
    return float(abs(complex(u) - s))


@dataclass
class PhaseSolution:
    phases: np.ndarray
    target: complex
    residual: float
    solver: Solver
    iterations: int
    accepted: bool
    local_minimum: bool = False
    trace: list = field(default_factory=list, repr=False)

    def recompute_residual(self, h) -> float:
        return residual(h, self.phases, self.target)


def _finish(ch: ChannelVector, theta, u, solver, iterations, eps, **extra) -> PhaseSolution:
    theta = wrap_phase(theta)
    res = residual(ch, theta, u)
    ok = res <= eps * max(outer_radius(ch), 1e-300)
    return PhaseSolution(theta, complex(u), res, solver, int(iterations), bool(ok), **extra)


def _check_inside(ch, u, inner, tol):
    outer = outer_radius(ch)
    r = abs(complex(u))
    slack = tol * max(outer, 1e-300)
    if r > outer + slack or r < inner - slack:
        raise TargetOutsideDoughnut(
            f"|u| = {r:.6g} is outside the doughnut [{inner:.6g}, {outer:.6g}]")
    return outer


# ---------------------------------------------------------------------------
# homotopy


def homotopy_path(h, start_phases):
    """Return ``theta(t)`` and ``f(t)`` for the straight path in phase space.

    ``theta(t) = (1 - t) * start - t * arg(h)``, ``f(t) = |sum h e^{j theta(t)}|^2 / N``.
    """
    g = as_channel(h).gains
    start = np.asarray(start_phases, dtype=float)
    end = -np.angle(g)

    def theta(t):
        t = np.asarray(t, dtype=float)[..., None]
        return (1.0 - t) * start + t * end

    def f(t):
        return np.abs(np.sum(g * np.exp(1j * theta(t)), axis=-1)) ** 2 / g.size

    return theta, f


def solve_homotopy(h, u, *, inner: InnerRadius | None = None, eps: float = EPS_SOLVE,
                   region_tol: float = 1e-9, scan_points: int = 256,
                   bisection_steps: int = 64) -> PhaseSolution:
    """Continuation precoder.

    ``inner`` is the inner-radius result whose phases start the path; it is
    computed when not supplied.
    """
    ch = as_channel(h)
    u = complex(u)
    if inner is None:
        inner = inner_radius(ch)
    _check_inside(ch, u, inner.value, region_tol)
    theta, f = homotopy_path(ch, inner.phases)
    target = abs(u) ** 2

    ts = np.linspace(0.0, 1.0, scan_points + 1)
    g = f(ts) - target
    evals = ts.size
    if g[0] >= 0.0:
        t_u = 0.0
    elif g[-1] <= 0.0:
        t_u = 1.0
    else:
        crossings = np.flatnonzero((g[:-1] < 0.0) & (g[1:] >= 0.0))
        if crossings.size == 0:
            # every consecutive pair missed the sign change; refine densely
            ts = np.linspace(0.0, 1.0, 64 * scan_points + 1)
            g = f(ts) - target
            evals += ts.size
            crossings = np.flatnonzero((g[:-1] < 0.0) & (g[1:] >= 0.0))
            if crossings.size == 0:
                raise BracketFailure("no sign change of f(t) - |u|^2 on [0, 1]")
        k = crossings[0]
        lo, hi = ts[k], ts[k + 1]
        for _ in range(bisection_steps):
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                break
            evals += 1
            if f(mid) - target < 0.0:
                lo = mid
            else:
                hi = mid
        t_u = lo if abs(f(lo) - target) <= abs(f(hi) - target) else hi

    th = theta(t_u)
    s = np.sum(ch.gains * np.exp(1j * th))
    phi = np.angle(u) - np.angle(s) if abs(s) > 0 and abs(u) > 0 else 0.0
    return _finish(ch, th + phi, u, Solver.HOMOTOPY, evals, eps)


# ---------------------------------------------------------------------------
# coordinate descent


def split_angle_init(h, u) -> np.ndarray:
    """Phases turned towards ``u`` with alternating offsets ``+-arccos(|u|/M)``."""
    ch = as_channel(h)
    g = ch.gains
    outer = outer_radius(ch)
    delta = np.arccos(min(1.0, abs(complex(u)) / outer)) if outer > 0 else 0.0
    signs = np.where(np.arange(g.size) % 2 == 0, -1.0, 1.0)
    return np.angle(complex(u)) - np.angle(g) + signs * delta


def solve_coord_descent(h, u, *, init=None, eps: float = EPS_SOLVE, max_sweeps: int = 500,
                        tol: float = 1e-13, record: bool = False) -> PhaseSolution:
    """Cyclic single-angle descent on ``|u - sum h e^{j theta} / sqrt(N)|``.

    Each update turns one phasor towards the current residual direction,
    which is that angle's exact minimizer, so the error never increases.
    Starts from ``init`` or, by default, from the split-angle point: every
    phasor is turned towards ``u`` and then offset by ``+delta`` or ``-delta``
    in alternation, with ``cos(delta) = |u| / M(h)``. Starting from phasors
    that are all collinear with ``u`` would keep every update on that line.
    """
    ch = as_channel(h)
    g = ch.gains
    n = g.size
    u = complex(u)
    if init is None:
        init = split_angle_init(ch, u)
    psi0 = np.asarray(init, dtype=float) + np.angle(g)
    trace = [] if record else None
    if record:
        trace.append(residual(ch, init, u))
    scale = max(ch.l1, 1e-300)
    # stop as soon as the acceptance level is met or progress stalls
    psi, res, sweeps = cyclic_descent(np.abs(g)[None, :], psi0[None, :],
                                      np.array([u * np.sqrt(n)]), max_sweeps=max_sweeps,
                                      tol=tol, scale=scale, pairs=False,
                                      history=trace)
    if trace is not None:
        trace = [t / np.sqrt(n) for t in trace[1:]]
        trace.insert(0, residual(ch, init, u))
    sol = _finish(ch, psi[0] - np.angle(g), u, Solver.COORD_DESCENT, sweeps * n, eps,
                  trace=trace or [])
    sol.local_minimum = not sol.accepted
    return sol


# ---------------------------------------------------------------------------
# depth-first search


def admissible_arcs(c: complex, gain: complex, inner: float, outer: float, *,
                    slack: float = 1e-12):
    """Angles ``theta`` with ``inner <= |c - gain e^{j theta}| <= outer``.

    Returns a list of ``(start, length)`` arcs, ``start`` in [-pi, pi) and the
    arc running counter-clockwise for ``length`` radians. Cosine bounds that
    miss [-1, 1] by at most ``slack`` are clipped, so a target on the doughnut
    boundary yields a zero-length arc instead of nothing.
    """
    rho = abs(gain)
    d = abs(c)
    if rho == 0.0 or d == 0.0:
        ok = inner <= max(d, rho) <= outer
        return [(-np.pi, 2 * np.pi)] if ok else []
    # |c - rho e^{j psi}|^2 = d^2 + rho^2 - 2 d rho cos(psi - arg c)
    cos_lo = (d * d + rho * rho - outer * outer) / (2 * d * rho)
    cos_hi = (d * d + rho * rho - inner * inner) / (2 * d * rho)
    if cos_lo > 1.0 + slack or cos_hi < -1.0 - slack or cos_lo > cos_hi + slack:
        return []
    cos_lo, cos_hi = min(cos_lo, 1.0), max(cos_hi, -1.0)
    a_small = np.arccos(min(cos_hi, 1.0))  # |delta| lower edge
    a_big = np.arccos(max(cos_lo, -1.0))  # |delta| upper edge
    base = np.angle(c) - np.angle(gain)
    if a_small <= 0.0 and a_big >= np.pi:
        return [(-np.pi, 2 * np.pi)]
    if a_small <= 0.0:
        arcs = [(base - a_big, 2 * a_big)]
    elif a_big >= np.pi:
        arcs = [(base + a_small, 2 * (np.pi - a_small))]
    else:
        arcs = [(base + a_small, a_big - a_small), (base - a_big, a_big - a_small)]
    return [(float(wrap_phase(s)), float(length)) for s, length in arcs]


def _arc_points(arcs, per_arc):
    """Grid points inside each arc, widest arc first, arc centers first."""
    pts = []
    for start, length in sorted(arcs, key=lambda a: -a[1]):
        if length <= 0.0:
            pts.append(start)
            continue
        k = np.arange(per_arc)
        frac = (k + 0.5) / per_arc
        order = np.argsort(np.abs(frac - 0.5), kind="stable")
        pts.extend(start + length * frac[order])
    return pts


def _prefix_radii(g):
    """Unnormalized outer and inner radii of every prefix h[:j], j = 0..N."""
    n = g.size
    mags = np.abs(g)
    outer = np.concatenate([[0.0], np.cumsum(mags)])
    inner = np.zeros(n + 1)
    inner[1] = mags[0]
    if n >= 2:
        padded = np.zeros((n - 1, n))
        for j in range(2, n + 1):
            padded[j - 2, :j] = mags[:j]
        # one restart is plenty: the sorted alternating start plus pair sweeps is exact
        # on every prefix we have tested, and this runs once per solve
        inner[2:] = inner_radius_batch(padded, restarts=1) * np.sqrt(n)
    return outer, inner


def _pair_solutions(c, g1, g2):
    """Both ways of writing c = g1 e^{j t1} + g2 e^{j t2} (nearest if impossible)."""
    a1, a2 = abs(g1), abs(g2)
    d = abs(c)
    if d == 0.0:
        t2 = -np.angle(g2)
        return [(np.angle(-g2 * np.exp(1j * t2)) - np.angle(g1), t2)]
    cg = np.clip((d * d + a2 * a2 - a1 * a1) / (2 * d * a2), -1.0, 1.0) if a2 > 0 else 1.0
    out = []
    for sgn in (1.0, -1.0):
        t2 = sgn * np.arccos(cg) + np.angle(c) - np.angle(g2)
        rest = c - g2 * np.exp(1j * t2)
        t1 = np.angle(rest) - np.angle(g1)
        out.append((t1, t2))
    return out


def solve_dfs_two_step(h, u, *, depth: int | None = None, grid_per_level: int = 64,
                       threshold: float | None = None, eps: float = EPS_SOLVE,
                       region_tol: float = 1e-9, max_nodes: int = 200_000,
                       polish_sweeps: int = 500) -> PhaseSolution:
    """Depth-first search over admissible angle sets, then descent polishing.

    Angles are fixed from the last antenna backwards. At every level the next
    angle must leave a remainder inside the doughnut of the antennas not yet
    fixed; that set is one or two arcs, sampled at ``grid_per_level`` points
    each. The last two angles are solved exactly. With ``depth`` below N-1
    the search stops early once the seed (unfixed angles at 0) is within
    ``threshold`` of ``u``.
    """
    ch = as_channel(h)
    g = ch.gains
    n = g.size
    u = complex(u)
    sqn = np.sqrt(n)
    outer_n = outer_radius(ch)
    prefix_outer, prefix_inner = _prefix_radii(g)
    _check_inside(ch, u, prefix_inner[n] / sqn, region_tol)
    if depth is None:
        depth = n - 1
    if threshold is None:
        threshold = 0.05 * outer_n
    theta = np.zeros(n)
    nodes = 0
    best_seed = None

    def seed_error(fixed_from):
        th = np.where(np.arange(n) >= fixed_from, theta, 0.0)
        return residual(ch, th, u), th

    def search(j, c):
        # antennas 0..j-1 still free; c is their unnormalized target
        nonlocal nodes, best_seed
        nodes += 1
        if nodes > max_nodes:
            return False
        if j == 0:
            return True
        if j == 1:
            theta[0] = np.angle(c) - np.angle(g[0])
            return True
        if j == 2:
            for t1, t2 in _pair_solutions(c, g[0], g[1]):
                theta[0], theta[1] = t1, t2
                return True
        if n - j >= depth:
            err, th = seed_error(j)
            if best_seed is None or err < best_seed[0]:
                best_seed = (err, th.copy())
            if err <= threshold:
                return True
        arcs = admissible_arcs(c, g[j - 1], prefix_inner[j - 1], prefix_outer[j - 1])
        for t in _arc_points(arcs, grid_per_level):
            theta[j - 1] = t
            if search(j - 1, c - g[j - 1] * np.exp(1j * t)):
                return True
        return False

    found = search(n, u * sqn)
    if found:
        seed = theta.copy()
    elif best_seed is not None:
        seed = best_seed[1]
    else:
        raise SearchExhausted(f"no admissible branch after {nodes} nodes")
    sol = solve_coord_descent(ch, u, init=seed, eps=eps, max_sweeps=polish_sweeps)
    if sol.residual > residual(ch, seed, u):  # descent never increases, but be explicit
        sol = _finish(ch, seed, u, Solver.DFS_TWO_STEP, nodes, eps)
    return PhaseSolution(sol.phases, u, sol.residual, Solver.DFS_TWO_STEP,
                         nodes + sol.iterations, sol.accepted)


# ---------------------------------------------------------------------------
# closed forms


def _acos_checked(x, slack=1e-12):
    if x < -1.0 - slack or x > 1.0 + slack:
        raise TargetOutsideDoughnut(f"arccos argument {x:.3g} outside [-1, 1]")
    return float(np.arccos(np.clip(x, -1.0, 1.0)))


def closed_form_n2_branches(h, u):
    """Both two-antenna solutions (the two arccos branches)."""
    ch = as_channel(h)
    if ch.n != 2:
        raise ValueError(f"closed form needs N=2, got N={ch.n}")
    h1, h2 = ch.gains
    u = complex(u)
    a1, a2 = abs(h1), abs(h2)
    r = abs(u)
    if r <= 1e-300 or a2 == 0.0:
        # u = 0 is only reachable with |h1| = |h2|; the second phasor is free
        t2 = -np.angle(h2) if a2 > 0 else 0.0
        t1 = np.angle(np.sqrt(2) * u - h2 * np.exp(1j * t2)) - np.angle(h1)
        return [np.array([t1, t2])]
    x = (r * r + a2 * a2 / 2 - a1 * a1 / 2) / (np.sqrt(2) * r * a2)
    acos = _acos_checked(x)
    out = []
    for sgn in (1.0, -1.0):
        t2 = sgn * acos + np.angle(u) - np.angle(h2)
        t1 = np.angle(np.sqrt(2) / h1 * (u - h2 / np.sqrt(2) * np.exp(1j * t2)))
        out.append(np.array([t1, t2]))
    return out


def solve_closed_form_n2(h, u, *, branch: int = 0, eps: float = EPS_SOLVE) -> PhaseSolution:
    ch = as_channel(h)
    branches = closed_form_n2_branches(ch, u)
    theta = branches[min(branch, len(branches) - 1)]
    return _finish(ch, theta, u, Solver.CLOSED_FORM_N2, 1, eps)


def solve_closed_form_n3(h, u, *, eps: float = EPS_SOLVE) -> PhaseSolution:
    """Three-antenna construction.

    The third angle may take any value in an interval of cosines; the midpoint
    of that interval is used, and the first two angles then follow from the
    two-antenna formula.
    """
    ch = as_channel(h)
    if ch.n != 3:
        raise ValueError(f"closed form needs N=3, got N={ch.n}")
    h1, h2, h3 = ch.gains
    a1, a2, a3 = np.abs(ch.gains)
    u = complex(u)
    r = abs(u)
    if r <= 1e-300 or a3 == 0.0:
        t3 = -np.angle(h3) if a3 > 0 else 0.0
    else:
        lo = (3 * r * r + a3 * a3 - (a1 + a2) ** 2) / (2 * np.sqrt(3) * r * a3)
        hi = (3 * r * r + a3 * a3 - (a1 - a2) ** 2) / (2 * np.sqrt(3) * r * a3)
        if lo > 1.0 + 1e-12 or hi < -1.0 - 1e-12 or lo > hi + 1e-12:
            raise TargetOutsideDoughnut("no admissible third angle")
        mid = 0.5 * (max(lo, -1.0) + min(hi, 1.0))
        t3 = _acos_checked(mid) + np.angle(u) - np.angle(h3)
    u1 = np.sqrt(1.5) * (u - h3 * np.exp(1j * t3) / np.sqrt(3))
    t1, t2 = closed_form_n2_branches([h1, h2], u1)[0]
    return _finish(ch, np.array([t1, t2, t3]), u, Solver.CLOSED_FORM_N3, 1, eps)


# ---------------------------------------------------------------------------
# dispatch


@dataclass(frozen=True)
class DispatchPolicy:
    """Array-size routing: closed form up to ``closed_form_max`` antennas,
    depth-first search up to ``dfs_max``, coordinate descent beyond."""

    closed_form_max: int = 3
    dfs_max: int = 10
    eps: float = EPS_SOLVE
    homotopy_fallback: bool = True
    dfs_grid: int = 64


def dispatch_solve(h, u, policy: DispatchPolicy | None = None) -> PhaseSolution:
    policy = policy or DispatchPolicy()
    ch = as_channel(h)
    n = ch.n
    eps = policy.eps
    if n == 2 and policy.closed_form_max >= 2:
        sol = solve_closed_form_n2(ch, u, eps=eps)
    elif n == 3 and policy.closed_form_max >= 3:
        sol = solve_closed_form_n3(ch, u, eps=eps)
    elif 3 < n <= policy.dfs_max:
        try:
            sol = solve_dfs_two_step(ch, u, grid_per_level=policy.dfs_grid, eps=eps)
        except SearchExhausted:
            sol = None
    else:
        sol = solve_coord_descent(ch, u, eps=eps)
    if (sol is None or not sol.accepted) and policy.homotopy_fallback and n > 1:
        fallback = solve_homotopy(ch, u, eps=eps)
        if sol is None or fallback.residual < sol.residual:
            sol = fallback
    return sol
