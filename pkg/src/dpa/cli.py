"""Command-line entry point ``dpa``.

Every run is determined by its flags.  Structured results are JSON and
curves are CSV; floats are written with 17 significant digits.  Exit status
is 0 on success, 2 on invalid input and 1 on numeric failure.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__, _io
from .attack import run_attack
from .composition import (basic_epsilon, clt_compose, clt_epsilon, fft_compose, rdp_compose,
                          rdp_epsilon)
from .divergences import epsilon_at_delta, hockey_stick
from .exceptions import NotConverged, NumericError, ValidationError
from .mechanisms import FAMILIES, MechanismSpec, mechanism_pld, mechanism_plds, staircase
from .optimize import (NoiseDistribution, cost_from_name, fit_staircase, solve_cactus,
                       solve_schrodinger)
from .pld import DEFAULT_POLICY, DiscretizationPolicy, PrivacyLossDistribution
from .tradeoff import TradeoffCurve, dp_tradeoff, gaussian_tradeoff, tradeoff_from_pld

_PARAM_FLAGS = {"sigma": "sigma", "lambda": "lam", "epsilon": "epsilon", "eta": "eta"}


class _Parser(argparse.ArgumentParser):
    """Argument errors become ValidationError so they map to exit status 2."""

    def error(self, message):
        raise ValidationError(message)


# --------------------------------------------------------------------------
# input helpers

def _read(path):
    if path == "-":
        return sys.stdin.read()
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc.strerror}") from None


def _load_json(path):
    try:
        return json.loads(_read(path))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path} is not valid JSON: {exc.msg}") from None


def _policy(args):
    return DiscretizationPolicy(grid_spacing=args.grid_spacing, rounding=args.rounding)


def _mech_from_flags(args):
    if args.mech:
        return MechanismSpec.from_dict(_load_json(args.mech))
    if not args.family:
        raise ValidationError("give --mech FILE or --family with its parameters")
    params = {}
    for key, dest in _PARAM_FLAGS.items():
        val = getattr(args, dest)
        if val is not None:
            params[key] = val
    if args.family == "randomized_response":
        return MechanismSpec(args.family, params, 1.0)
    return MechanismSpec(args.family, params, args.sensitivity)


def _load_pld(args):
    """PLD from ``--pld``, a noise file, or a mechanism (file or flags)."""
    if args.pld:
        return PrivacyLossDistribution.from_dict(_load_json(args.pld))
    if args.noise:
        noise = NoiseDistribution.from_dict(_load_json(args.noise))
        return noise.pld(args.sensitivity, _policy(args))
    return mechanism_pld(_mech_from_flags(args), _policy(args))


def _bound(pld):
    return "upper" if pld.pessimistic else "lower"


# --------------------------------------------------------------------------
# output

def _emit(args, text):
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _emit_record(args, record):
    """Write a flat record as JSON or as a one-row CSV."""
    if args.format == "csv":
        _emit(args, _io.write_csv(list(record), [[v] for v in record.values()]))
    else:
        _emit(args, _io.dumps(record) + "\n")


def _json_only(args, what):
    if args.format == "csv":
        raise ValidationError(f"{what} is only available as JSON")


# --------------------------------------------------------------------------
# subcommands

def _cmd_mech(args):
    spec = _mech_from_flags(args)
    if args.action == "spec":
        _json_only(args, "a mechanism spec")
        _emit(args, spec.to_json() + "\n")
        return 0
    pld = mechanism_pld(spec, _policy(args))
    if args.format == "csv":
        _emit(args, _io.write_csv(["loss", "mass"], [pld.losses, pld.masses]))
    else:
        _emit(args, pld.to_json() + "\n")
    return 0


def _cmd_delta(args):
    pld = _load_pld(args)
    _emit_record(args, {"epsilon": float(args.eps), "delta": hockey_stick(pld, args.eps),
                        "bound": _bound(pld)})
    return 0


def _cmd_epsilon(args):
    pld = _load_pld(args)
    _emit_record(args, {"epsilon": epsilon_at_delta(pld, args.delta), "delta": float(args.delta),
                        "bound": _bound(pld)})
    return 0


def _cmd_delta_curve(args):
    if args.points < 2:
        raise ValidationError("--points must be at least 2")
    if not args.eps_max > args.eps_min:
        raise ValidationError("--eps-max must exceed --eps-min")
    if args.format == "json":
        raise ValidationError("delta-curve writes CSV")
    pld = _load_pld(args)
    eps = np.linspace(args.eps_min, args.eps_max, args.points)
    delta = hockey_stick(pld, eps)
    kinds = [_bound(pld)] * eps.size
    _emit(args, _io.write_csv(["epsilon", "delta", "bound_kind"], [eps, delta, kinds]))
    return 0


def _cmd_tradeoff(args):
    if args.format == "json":
        raise ValidationError("tradeoff writes CSV")
    if args.gdp_mu is not None:
        curve = gaussian_tradeoff(args.gdp_mu)
    elif args.dp_eps is not None:
        curve = dp_tradeoff(args.dp_eps, args.dp_delta)
    elif args.pld or args.noise:
        fwd = _load_pld(args)
        rev = PrivacyLossDistribution.from_dict(_load_json(args.pld_reverse)) if args.pld_reverse else None
        curve = tradeoff_from_pld(fwd, rev)
    else:
        curve = tradeoff_from_pld(*mechanism_plds(_mech_from_flags(args), _policy(args)))
    if args.points < 2:
        raise ValidationError("--points must be at least 2")
    _emit(args, curve.to_csv(args.points))
    return 0


def _cmd_compose(args):
    if (args.eps is None) == (args.delta is None):
        raise ValidationError("give exactly one of --eps and --delta")
    pld = _load_pld(args)
    k = args.k
    if args.method == "fft":
        composed = fft_compose(pld, k, tail_mass_bound=args.tail_mass_bound)
        bound = _bound(composed)
        if args.eps is not None:
            eps, delta = float(args.eps), hockey_stick(composed, args.eps)
        else:
            eps, delta = epsilon_at_delta(composed, args.delta), float(args.delta)
    elif args.method == "basic":
        if not pld.pessimistic:
            raise ValidationError("basic composition needs a pessimistic PLD")
        bound = "upper"
        if args.eps is not None:
            eps, delta = float(args.eps), min(1.0, k * hockey_stick(pld, args.eps / k))
        else:
            eps, delta = basic_epsilon(pld, k, args.delta), float(args.delta)
    elif args.method == "rdp":
        # Renyi values from an optimistic PLD are underestimates
        bound = "upper" if pld.pessimistic else "estimate"
        if args.eps is not None:
            eps, delta = float(args.eps), rdp_compose(pld, k, args.eps).delta
        else:
            eps, delta = rdp_epsilon(pld, k, args.delta), float(args.delta)
    else:
        bound = "estimate"
        if args.eps is not None:
            eps, delta = float(args.eps), clt_compose(pld, k, args.eps)[0]
        else:
            eps, delta = clt_epsilon(pld, k, args.delta), float(args.delta)
    _emit_record(args, {"epsilon": eps, "delta": delta, "method": args.method, "bound": bound})
    return 0


def _cmd_optimize(args):
    _json_only(args, "optimizer output")
    if args.kind == "staircase":
        if args.eps is None:
            raise ValidationError("optimize staircase needs --eps")
        eta, _ = fit_staircase(args.eps, args.sensitivity, cost_from_name(args.cost, 1.0))
        _emit(args, staircase(args.eps, eta, args.sensitivity).to_json() + "\n")
        return 0
    if args.budget is None:
        raise ValidationError(f"optimize {args.kind} needs --budget")
    cost = cost_from_name(args.cost, args.budget)
    try:
        if args.kind == "cactus":
            noise, _ = solve_cactus(args.sensitivity, cost, args.zmax, args.spacing, args.tolerance)
        else:
            noise = solve_schrodinger(cost, args.boundary, args.ode_step)
    except NotConverged as exc:
        if exc.best is None:
            raise
        noise = exc.best[0] if isinstance(exc.best, tuple) else exc.best
        record = dict(noise.to_dict(), converged=False)
        _emit(args, _io.dumps(record) + "\n")
        print(f"dpa: {exc}", file=sys.stderr)
        return 1
    _emit(args, noise.to_json() + "\n")
    return 0


def _cmd_attack(args):
    _json_only(args, "an attack report")
    spec = _mech_from_flags(args)
    if args.claimed:
        claimed = TradeoffCurve.from_csv(_read(args.claimed))
    else:
        claimed = tradeoff_from_pld(*mechanism_plds(spec, _policy(args)))
    report = run_attack(spec, claimed, args.samples, args.seed)
    text = _io.dumps(report.to_dict()) + "\n"
    if args.report:
        with open(args.report, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        _emit(args, text)
    return 0


# --------------------------------------------------------------------------
# parser

_GLOBAL_DEFAULTS = {"grid_spacing": DEFAULT_POLICY.grid_spacing, "rounding": DEFAULT_POLICY.rounding,
                    "seed": 0, "out": None, "format": None}


def _count(text):
    # accepts 1000000 as well as 1e6
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid count {text!r}") from None
    if not value.is_integer():
        raise argparse.ArgumentTypeError(f"count must be a whole number, got {text!r}")
    return int(value)


def _add_global_options(p):
    # defaults are filled in after parsing so options given before or after
    # the subcommand both take effect
    g = p.add_argument_group("global options")
    g.add_argument("--grid-spacing", type=float, default=argparse.SUPPRESS,
                   help=f"PLD grid spacing in nats (default {DEFAULT_POLICY.grid_spacing:g})")
    g.add_argument("--rounding", choices=("pessimistic", "optimistic"), default=argparse.SUPPRESS,
                   help="discretization direction (default pessimistic)")
    g.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="random seed (default 0)")
    g.add_argument("--out", default=argparse.SUPPRESS, help="output file (default standard output)")
    g.add_argument("--format", choices=("json", "csv"), default=argparse.SUPPRESS)


def _global_parent():
    p = argparse.ArgumentParser(add_help=False, allow_abbrev=False)
    _add_global_options(p)
    return p


def _mech_parent():
    p = argparse.ArgumentParser(add_help=False, allow_abbrev=False)
    g = p.add_argument_group("mechanism")
    g.add_argument("--mech", help="mechanism JSON file")
    g.add_argument("--family", choices=FAMILIES)
    g.add_argument("--sigma", type=float)
    g.add_argument("--lambda", dest="lam", type=float)
    g.add_argument("--epsilon", type=float, help="staircase or randomized-response epsilon")
    g.add_argument("--eta", type=float)
    g.add_argument("--sensitivity", type=float, default=1.0)
    return p


def _pld_parent():
    p = argparse.ArgumentParser(add_help=False, allow_abbrev=False)
    g = p.add_argument_group("privacy loss source")
    g.add_argument("--pld", help="PLD JSON file")
    g.add_argument("--noise", help="noise JSON file from 'optimize cactus|schrodinger'")
    return p


def build_parser() -> argparse.ArgumentParser:
    glob, mech, pld = _global_parent(), _mech_parent(), _pld_parent()
    parser = _Parser(prog="dpa", description="Privacy accounting, noise design and attack checks.",
                     allow_abbrev=False)
    parser.add_argument("--version", action="store_true", help="print version and default policy")
    _add_global_options(parser)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("mech", parents=[glob, mech], allow_abbrev=False, help="mechanism PLD or spec")
    p.add_argument("action", choices=("pld", "spec"))
    p.set_defaults(func=_cmd_mech)

    p = sub.add_parser("delta", parents=[glob, pld, mech], allow_abbrev=False, help="delta at epsilon")
    p.add_argument("--eps", type=float, required=True)
    p.set_defaults(func=_cmd_delta)

    p = sub.add_parser("epsilon", parents=[glob, pld, mech], allow_abbrev=False, help="epsilon at delta")
    p.add_argument("--delta", type=float, required=True)
    p.set_defaults(func=_cmd_epsilon)

    p = sub.add_parser("delta-curve", parents=[glob, pld, mech], allow_abbrev=False,
                       help="delta over an epsilon grid (CSV)")
    p.add_argument("--eps-min", type=float, default=0.0)
    p.add_argument("--eps-max", type=float, required=True)
    p.add_argument("--points", type=int, default=101)
    p.set_defaults(func=_cmd_delta_curve)

    p = sub.add_parser("tradeoff", parents=[glob, pld, mech], allow_abbrev=False,
                       help="tradeoff curve (CSV)")
    p.add_argument("--pld-reverse", help="PLD JSON of the reversed pair")
    p.add_argument("--gdp-mu", type=float, help="Gaussian-DP curve with this mu")
    p.add_argument("--dp-eps", type=float, help="(epsilon, delta)-DP curve")
    p.add_argument("--dp-delta", type=float, default=0.0)
    p.add_argument("--points", type=int, default=2048)
    p.set_defaults(func=_cmd_tradeoff)

    p = sub.add_parser("compose", parents=[glob, pld, mech], allow_abbrev=False,
                       help="k-fold composition")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--method", choices=("fft", "basic", "rdp", "clt"), default="fft")
    p.add_argument("--eps", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--tail-mass-bound", type=float, default=1e-10)
    p.set_defaults(func=_cmd_compose)

    p = sub.add_parser("optimize", parents=[glob], allow_abbrev=False, help="noise design")
    p.add_argument("kind", choices=("staircase", "cactus", "schrodinger"))
    p.add_argument("--sensitivity", type=float, default=1.0)
    p.add_argument("--cost", choices=("quad", "abs"), default="quad")
    p.add_argument("--budget", type=float)
    p.add_argument("--eps", type=float, help="staircase epsilon")
    p.add_argument("--zmax", type=float, default=6.0)
    p.add_argument("--spacing", type=float, default=0.01)
    p.add_argument("--tolerance", type=float, default=1e-9)
    p.add_argument("--boundary", type=float, default=10.0)
    p.add_argument("--ode-step", type=float, default=1e-3)
    p.set_defaults(func=_cmd_optimize)

    p = sub.add_parser("attack", parents=[glob, mech], allow_abbrev=False,
                       help="likelihood-ratio attack against a claimed curve")
    p.add_argument("--claimed", help="curve CSV (default: the mechanism's own curve)")
    p.add_argument("--samples", type=_count, default=1_000_000)
    p.add_argument("--report", help="report JSON file")
    p.set_defaults(func=_cmd_attack)
    return parser


def _version_text():
    policy = {"grid_spacing": DEFAULT_POLICY.grid_spacing,
              "tail_mass_bound": DEFAULT_POLICY.tail_mass_bound,
              "rounding": DEFAULT_POLICY.rounding}
    return f"dpa {__version__}\ndefault policy: {_io.dumps(policy)}\n"


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        for key, val in _GLOBAL_DEFAULTS.items():
            if not hasattr(args, key):
                setattr(args, key, val)
        if args.version:
            sys.stdout.write(_version_text())
            return 0
        if not args.command:
            raise ValidationError("a subcommand is required (see dpa --help)")
        _policy(args)
        return args.func(args)
    except ValidationError as exc:
        print(f"dpa: error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"dpa: numeric failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
