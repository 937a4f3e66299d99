"""Command-line entry point: ``cemiso <subcommand> [flags]``.

Every subcommand writes CSV (to stdout or ``--out``). Exit codes: 0 on
success, 2 for invalid input, 3 when a numerical step fails.
"""

from __future__ import annotations

import argparse
import json
import re
import sys

import numpy as np

from . import __version__
from . import experiments as ex
from .alphabets import RegionEnsemble, optimize_dauip
from .capacity import db_to_linear
from .doughnut import outer_radius
from .fading import ChannelVector, parse_fading
from .precoder import DispatchPolicy, PrecoderError, TargetOutsideDoughnut, dispatch_solve

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    # let comma lists that start with a minus sign ("-20,-10") pass as values
    _NEGATIVE_LIST = re.compile(r"^-\d*\.?\d+([eE][-+]?\d+)?(,-?\d*\.?\d+([eE][-+]?\d+)?)*,?$")

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self._negative_number_matcher = self._NEGATIVE_LIST

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _floats(text: str) -> tuple:
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> tuple:
    try:
        return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _complex(text: str) -> complex:
    parts = text.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected re,im, got {text!r}")
    try:
        return complex(float(parts[0]), float(parts[1]))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected re,im, got {text!r}") from None


def read_channel_csv(path: str) -> ChannelVector:
    """One antenna per row, ``re,im``; blank lines and ``#`` comments are skipped."""
    gains = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise UsageError(f"{path}:{lineno}: expected 're,im'")
            try:
                gains.append(complex(float(parts[0]), float(parts[1])))
            except ValueError:
                raise UsageError(f"{path}:{lineno}: not a number: {line!r}") from None
    if not gains:
        raise UsageError(f"{path}: no channel rows")
    return ChannelVector(np.array(gains))


def _common(p, *, n_default="1,2,4,16,64", snr_default=None, trials=10_000):
    p.add_argument("--n", type=_ints, default=_ints(n_default),
                   help=f"antenna counts, comma separated (default {n_default})")
    if snr_default is not None:
        p.add_argument("--snr-db", type=_floats, default=_floats(snr_default),
                       help=f"P_T/sigma^2 grid in dB, comma separated (default {snr_default})")
    p.add_argument("--fading", default="rayleigh",
                   help="rayleigh | bounded:<B> | dlos:<A>; B and A are gain magnitudes "
                        "(default rayleigh)")
    p.add_argument("--trials", type=int, default=trials,
                   help=f"channel draws per antenna count (default {trials})")
    p.add_argument("--seed", type=int, default=1, help="master seed (default 1)")


def _search_flags(p):
    p.add_argument("--lmax", type=int, default=4, help="largest ring count searched (default 4)")
    p.add_argument("--alpha-grid", type=int, default=32,
                   help="ring positions k/G, k=1..G, on the doughnut width (default G=32)")
    p.add_argument("--search-trials", type=int, default=1000,
                   help="channels used for the ring search at each SNR (default 1000)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cemiso", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", help="flat JSON file of flag values; explicit flags win")
        p.add_argument("--out", help="write CSV here instead of stdout")
        return p

    p = add("precode", "solve phases that place symbol u at the receiver")
    p.add_argument("--h", dest="h_file",
                   help="channel CSV, one 're,im' row per antenna (dimensionless gains)")
    p.add_argument("--u", type=_complex,
                   help="target symbol 're,im' in normalized received amplitude")
    p.add_argument("--dfs-grid", type=int, default=64, help="grid points per admissible arc")

    p = add("mh-ratio", "mean inner/outer radius ratio versus N")
    _common(p, n_default="2,4,8,16,32,64,128")

    p = add("bounds", "mean rate bounds (bits/channel use) versus SNR")
    _common(p, n_default="4", snr_default="-10,-5,0,5,10,15,20", trials=2000)

    p = add("dauip-opt", "best ring alphabet per SNR")
    _common(p, n_default="4", snr_default="-5,0,5,10,15", trials=1000)
    _search_flags(p)

    p = add("rate-curve", "ergodic rates (bits/channel use) versus SNR")
    _common(p, n_default="4", snr_default="-10,-5,0,5,10,15,20", trials=2000)
    p.add_argument("--metrics", default=",".join(ex.RATE_METRICS),
                   help="comma separated subset of " + ", ".join(ex.RATE_METRICS)
                        + ", mi_dauip_<L>")
    _search_flags(p)

    for name, text in (("min-snr", "smallest SNR (dB) reaching a target ergodic rate"),
                       ("apg", "array power gain (dB) of each scheme")):
        p = add(name, text)
        _common(p, n_default="1,2,4,16,32,64" if name == "apg" else "1,2,4,16,64")
        p.add_argument("--rate", type=float, default=3.0,
                       help="target rate in bits/channel use (default 3)")
        p.add_argument("--scheme", default="mrt,papc,ce_uniform,ce_dauip",
                       help="comma separated subset of " + ", ".join(ex.SCHEMES))
        p.add_argument("--bracket-db", type=_floats, default=(-20.0, 25.0),
                       help="SNR search bracket 'low,high' in dB (default -20,25)")
        p.add_argument("--rate-tol", type=float, default=0.01,
                       help="stop when the rate is this close to the target, bits (default 0.01)")
        _search_flags(p)

    p = add("outage", "outage probability bounds versus SNR")
    _common(p, n_default="2,4", snr_default="0,5,10,15,20,25,30")
    p.add_argument("--rate", type=float, default=2.0,
                   help="target rate in bits/channel use (default 2)")

    p = add("mh-tail", "tail probability of the inner radius versus N")
    _common(p, n_default="8,16,32,64,128", trials=1000)
    p.add_argument("--c", type=_floats, default=(0.5, 1.0),
                   help="threshold constants c in c*log(N)/sqrt(N) (default 0.5,1)")
    return parser


def _apply_config(parser, argv):
    """Parse twice: config-file values become defaults, explicit flags override them."""
    args = parser.parse_args(argv)
    if not getattr(args, "config", None):
        return args
    try:
        with open(args.config) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {args.config}: {exc}") from None
    if not isinstance(cfg, dict):
        raise UsageError("config must be a flat JSON object")
    subparser = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest: a for a in subparser._actions}
    defaults = {}
    for key, value in cfg.items():
        dest = key.lstrip("-").replace("-", "_")
        dest = "h_file" if dest == "h" else dest
        if dest not in known or dest in ("config", "help"):
            raise UsageError(f"unknown config key {key!r} for {args.command}")
        action = known[dest]
        if isinstance(value, list):
            value = ",".join(str(v) for v in value)
        if action.type is not None:
            try:
                raw = str(value) if action.type in (_floats, _ints, _complex) else value
                value = action.type(raw)
            except (argparse.ArgumentTypeError, ValueError, TypeError) as exc:
                raise UsageError(f"config key {key!r}: {exc}") from None
        defaults[dest] = value
    subparser.set_defaults(**defaults)
    return parser.parse_args(argv)


def _config(args, **kw) -> ex.ExperimentConfig:
    if args.trials < 1:
        raise UsageError("--trials must be at least 1")
    parse_fading(args.fading)  # validate early
    return ex.ExperimentConfig(master_seed=args.seed, trials=args.trials, n_grid=tuple(args.n),
                               fading=args.fading, **kw)


def _precode(args) -> str:
    if args.h_file is None or args.u is None:
        raise UsageError("precode needs --h and --u")
    ch = read_channel_csv(args.h_file)
    sol = dispatch_solve(ch, args.u, DispatchPolicy(dfs_grid=args.dfs_grid))
    if not sol.accepted:
        raise PrecoderError(f"solver {sol.solver.value} stalled at residual {sol.residual:.3g}")
    lines = [f"# solver: {sol.solver.value}", f"# residual: {sol.residual:.12g}",
             f"# outer_radius: {outer_radius(ch):.12g}", "antenna,phase_rad"]
    lines += [f"{i + 1},{t:.12g}" for i, t in enumerate(sol.phases)]
    return "\n".join(lines) + "\n"


def _bounds(args) -> str:
    cfg = _config(args, snr_grid_db=tuple(args.snr_db))
    res = ex.ExperimentResult("bounds", ("n", "snr_db", "epi_lower", "i2_upper", "papc", "atpc"),
                              provenance=ex._provenance(cfg))
    for n in cfg.n_grid:
        ens = ex.build_ensemble(cfg.model(n), cfg.master_seed, cfg.trials, cfg.threads)
        for db in cfg.snr_grid_db:
            s = float(db_to_linear(db))
            vals = [ex._mean_se(ex.scheme_rates(k, ens, s))[0]
                    for k in ("epi_lower", "i2_upper", "papc", "atpc")]
            res.add(int(n), float(db), *vals)
    return res.to_csv()


def _dauip_opt(args) -> str:
    cfg = _config(args, snr_grid_db=tuple(args.snr_db), l_max=args.lmax,
                  alpha_grid=args.alpha_grid, search_trials=args.search_trials)
    res = ex.ExperimentResult("dauip-opt", ("n", "snr_db", "L", "alphas", "mean_mi"),
                              provenance=ex._provenance(cfg))
    for n in cfg.n_grid:
        ens = ex.build_ensemble(cfg.model(n), cfg.master_seed, cfg.trials, cfg.threads)
        regions = RegionEnsemble(ens.inner, ens.outer)
        for db in cfg.snr_grid_db:
            found = optimize_dauip(regions, float(db_to_linear(db)), l_max=cfg.l_max,
                                   grid=cfg.alpha_grid)
            res.add(int(n), float(db), found.ring_count, found.alphas, found.mean_mi)
    return res.to_csv()


def _run(args) -> str:
    cmd = args.command
    if cmd == "precode":
        return _precode(args)
    if cmd == "bounds":
        return _bounds(args)
    if cmd == "dauip-opt":
        return _dauip_opt(args)
    if cmd == "mh-ratio":
        return ex.mh_ratio_curve(_config(args)).to_csv()
    if cmd == "rate-curve":
        metrics = tuple(m for m in args.metrics.split(",") if m)
        for m in metrics:
            if m not in ex.RATE_METRICS and not (m.startswith("mi_dauip_")
                                                 and m.rsplit("_", 1)[1].isdigit()):
                raise UsageError(f"unknown metric {m!r}")
        cfg = _config(args, snr_grid_db=tuple(args.snr_db), metrics=metrics, l_max=args.lmax,
                      alpha_grid=args.alpha_grid, search_trials=args.search_trials)
        return ex.ergodic_rate_curves(cfg).to_csv()
    if cmd in ("min-snr", "apg"):
        if len(args.bracket_db) != 2:
            raise UsageError("--bracket-db needs exactly two values")
        cfg = _config(args, target_rate=args.rate, schemes=tuple(args.scheme.split(",")),
                      bracket_db=tuple(args.bracket_db), rate_tol=args.rate_tol,
                      l_max=args.lmax, alpha_grid=args.alpha_grid,
                      search_trials=args.search_trials)
        fn = ex.min_snr_for_rate if cmd == "min-snr" else ex.array_power_gain
        return fn(cfg).to_csv()
    if cmd == "outage":
        cfg = _config(args, snr_grid_db=tuple(args.snr_db), target_rate=args.rate)
        return ex.outage_bounds(cfg).to_csv()
    if cmd == "mh-tail":
        cfg = _config(args, c_values=tuple(args.c))
        return ex.mh_tail_check(cfg).to_csv()
    raise UsageError(f"unknown command {cmd!r}")  # pragma: no cover


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        text = _run(args)
    except SystemExit as exc:  # --help and --version
        return int(exc.code or 0)
    except (UsageError, TargetOutsideDoughnut, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (PrecoderError, ex.RateUnreachable, FloatingPointError, ArithmeticError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    if args.out:
        try:
            with open(args.out, "w", newline="") as fh:
                fh.write(text)
        except OSError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_USAGE
    else:
        sys.stdout.write(text)
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
