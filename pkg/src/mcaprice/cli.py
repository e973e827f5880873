"""Command-line interface: ``mcaprice <command> --scenario FILE ...``.

Solver commands print JSON on stdout; ``compare`` and ``regions-2x2`` print
CSV. Exit status is 0 on success, 1 for model or solver errors and 2 for
bad usage.
"""

import argparse
import csv
import json
import logging
import sys

import numpy as np

from . import benchmarks, cooperative, experiment, price_competition, quantity_competition, upm
from .errors import DomainError, MCAError
from .outcome import _jsonable
from .scenario import load_scenario


def _dump(obj):
    print(json.dumps(_jsonable(obj), indent=2, allow_nan=True))


def _scenario(args):
    try:
        return load_scenario(args.scenario)
    except OSError as exc:
        raise MCAError(f"cannot read scenario {args.scenario}: {exc}") from exc


def cmd_solve_upm(args):
    s = _scenario(args)
    with open(args.prices) as fh:
        data = json.load(fh)
    if isinstance(data, dict):
        if "h" in data:
            h = upm.HybridPriceMatrix(data["h"])
        else:
            h = upm.HybridPriceMatrix.from_decomposition(data["access"], data["tethering"])
    else:
        h = upm.HybridPriceMatrix(data)
    _dump(upm.solve_upm(s, h).to_dict())


def cmd_coop(args):
    _dump(benchmarks.coop_outcome(_scenario(args), allow_nonconvex=args.allow_nonconvex).to_dict())


def cmd_swm(args):
    _dump(benchmarks.swm_outcome(_scenario(args)).to_dict())


def cmd_ft(args):
    _dump(benchmarks.ft_outcome(_scenario(args)).to_dict())


def cmd_ntp(args):
    _dump(benchmarks.solve_ntp(_scenario(args)).to_dict())


def cmd_compete_price(args):
    s = _scenario(args)
    out = price_competition.solve_pce(s, verify=not args.no_verify)
    d = out.to_dict()
    d["path"] = price_competition.classify_regime(s).value
    _dump(d)


def cmd_regions(args):
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["C1", "C2", "region", "margin"])
    for C1 in np.linspace(args.c1_min, args.c1_max, args.steps):
        for C2 in np.linspace(args.c2_min, args.c2_max, args.steps):
            C = (float(C1), float(C2))
            try:
                r = price_competition.classify_2x2_region(args.theta, args.e, args.c, C).value
            except DomainError:
                # a user drops out before zeta_1; the closed form does not apply
                w.writerow([repr(C[0]), repr(C[1]), "Undefined", ""])
                continue
            m = price_competition.region_margin(args.theta, args.e, args.c, C)
            w.writerow([repr(C[0]), repr(C[1]), r, repr(m)])


def cmd_compete_quantity(args):
    s = _scenario(args)
    prof = quantity_competition.find_qce(s, method=args.method, tol=args.tol, trace=args.trace)
    out = quantity_competition.qce_outcome(s, prof)
    _dump({"profile": prof.to_dict(), "outcome": out.to_dict()})


def cmd_compete(args):
    _dump(quantity_competition.competitive_scheme(_scenario(args)).to_dict())


def cmd_compare(args):
    sys.stdout.write(benchmarks.compare_schemes(_scenario(args)).to_csv())


def cmd_experiment(args):
    cfg = experiment.load_config(args.config) if args.config else experiment.ExperimentConfig()
    kw = {}
    if args.replications is not None:
        kw["replications"] = args.replications
    if args.seed is not None:
        kw["seed"] = args.seed
    if args.workers is not None:
        kw["workers"] = args.workers
    if kw:
        cfg = cfg.replace(**kw)
    res = experiment.run_experiment(cfg)
    for p in experiment.emit_results(res, args.out, args.format):
        print(p)


def build_parser():
    ap = argparse.ArgumentParser(prog="mcaprice", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def with_scenario(name, fn, help):
        p = sub.add_parser(name, help=help)
        p.add_argument("--scenario", required=True, metavar="FILE")
        p.set_defaults(fn=fn)
        return p

    p = with_scenario("solve-upm", cmd_solve_upm, "users' traffic under given hybrid prices")
    p.add_argument("--prices", required=True, metavar="FILE",
                   help="JSON matrix, {'h': matrix} or {'access': vec, 'tethering': matrix}")
    p = with_scenario("coop", cmd_coop, "cooperative pricing")
    p.add_argument("--allow-nonconvex", action="store_true")
    with_scenario("swm", cmd_swm, "social welfare maximization")
    with_scenario("ft", cmd_ft, "free tethering")
    with_scenario("ntp", cmd_ntp, "no-tethering pricing")
    p = with_scenario("compete-price", cmd_compete_price, "price competition equilibrium")
    p.add_argument("--no-verify", action="store_true", help="skip the deviation probes")
    p = with_scenario("compete-quantity", cmd_compete_quantity, "quantity competition equilibrium")
    p.add_argument("--method", default="auto", choices=["auto", "mean_value", "bisection"])
    p.add_argument("--tol", type=float, default=quantity_competition.DEFAULT_TOL)
    p.add_argument("--trace", action="store_true", help="include the mean-value iterates b(t)")
    with_scenario("compete", cmd_compete, "competitive scheme (price or quantity equilibrium)")
    with_scenario("compare", cmd_compare, "CSV comparison of all schemes")

    p = sub.add_parser("regions-2x2", help="CSV grid of 2x2 existence regions over (C1, C2)")
    p.add_argument("--theta", type=float, nargs=2, required=True)
    p.add_argument("--e", type=float, nargs=2, required=True, help="operator costs")
    p.add_argument("--c", type=float, default=0.0, help="cellular energy cost")
    p.add_argument("--c1-min", type=float, default=0.1)
    p.add_argument("--c1-max", type=float, default=10.0)
    p.add_argument("--c2-min", type=float, default=0.1)
    p.add_argument("--c2-max", type=float, default=10.0)
    p.add_argument("--steps", type=int, default=50)
    p.set_defaults(fn=cmd_regions)

    p = sub.add_parser("experiment", help="Monte Carlo scheme comparison")
    p.add_argument("--config", metavar="FILE")
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--replications", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--format", default="csv", choices=["csv", "json"])
    p.set_defaults(fn=cmd_experiment)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.fn(args)
    except (MCAError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
