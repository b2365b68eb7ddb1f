"""Command-line interface: ``spreadtime <command> [options]``.

Tables are written as CSV (or JSON with ``--format json``) to ``--out`` or
standard output.  When ``--out`` is given, a ``<out>.json`` sidecar records
the command, its parameters, the spec and the library version.

Exit codes: 0 success, 2 invalid input, 3 infeasible request, 4 numerical
failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys

import numpy as np

from . import __version__, _kernels
from . import closedform as cf
from .analysis import min_seeds_for_bound, rate_scale_for_bound, seed_vector, spread_distribution
from .contribution import contribution_table
from .errors import (
    InfiniteMoment,
    Infeasible,
    NearDegenerateRates,
    NumericalFailure,
    SpecValidationError,
    TraceParseError,
    TrivialCompletion,
)
from .hetero import gamma_region
from .model import NetworkSpec, homogeneous_spec, require_valid
from .sim import SimConfig, ks_critical_value, ks_distance, simulate_completion, simulate_noncooperative
from .trace import (
    estimate_spec,
    export_trace,
    generate_trace,
    parse_grouping,
    parse_trace,
    spec_grouping,
)

EXIT_OK, EXIT_INVALID, EXIT_INFEASIBLE, EXIT_NUMERICAL = 0, 2, 3, 4


class CliError(Exception):
    def __init__(self, code, payload):
        self.code = code
        self.payload = payload
        super().__init__(payload.get("message", ""))


def _floats(text: str) -> list:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise CliError(EXIT_INVALID, {"error": "argument", "message": f"not a number list: {text!r}"})


def _ints(text: str) -> list:
    return [int(x) for x in text.split(",") if x.strip()]


def _grid(text: str) -> np.ndarray:
    """``start:stop:count`` or a comma list."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise CliError(EXIT_INVALID, {"error": "argument", "message": f"bad grid {text!r}"})
        start, stop = float(parts[0]), float(parts[1])
        return np.linspace(start, stop, int(parts[2]))
    return np.array(_floats(text))


def _load_spec(path: str) -> NetworkSpec:
    try:
        with open(path) as fh:
            return NetworkSpec.from_json(fh.read())
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise CliError(EXIT_INVALID, {"error": "spec", "message": f"cannot read spec {path}: {exc}"})


def _apply_seeds(spec: NetworkSpec, seeds) -> NetworkSpec:
    if seeds is None:
        return spec
    if len(seeds) == spec.num_groups:
        return spec.with_seeds(seeds)
    if len(seeds) == 1:
        return spec.with_seeds(seed_vector(seeds[0], spec.sizes, range(spec.num_groups)))
    raise CliError(EXIT_INVALID, {"error": "argument",
                                  "message": "--seeds needs one total or one value per group"})


def _write_table(args, header, rows, params, spec=None) -> None:
    if args.format == "json":
        text = json.dumps([dict(zip(header, r)) for r in rows], indent=2) + "\n"
    else:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
        text = buf.getvalue()
    _emit(args, text, params, spec)


def _emit(args, text, params, spec=None) -> None:
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
        side = {"command": args.command, "parameters": params, "version": __version__,
                "backend": _kernels.backend()}
        if spec is not None:
            side["spec"] = spec.to_dict()
        with open(args.out + ".json", "w") as fh:
            json.dump(side, fh, indent=2, sort_keys=True)
            fh.write("\n")
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_cdf(args):
    spec = _apply_seeds(_load_spec(args.spec), args.seeds)
    times = _grid(args.times)
    dist = spread_distribution(spec, args.alpha)
    surv = np.atleast_1d(dist.survival(times))
    rows = [(float(t), float(1.0 - s), float(s)) for t, s in zip(times, surv)]
    _write_table(args, ["t", "cdf", "survival"], rows,
                 {"alpha": args.alpha, "times": times.tolist()}, spec)


def cmd_guarantee(args):
    base = _load_spec(args.spec)
    alphas = _floats(args.alpha)
    betas = _floats(args.beta)
    seed_list = [None] if args.seeds is None else [[s] for s in args.seeds]
    rows = []
    for seeds in seed_list:
        spec = _apply_seeds(base, seeds)
        for a in alphas:
            dist = spread_distribution(spec, a)
            for b in betas:
                if dist.is_trivial:
                    rows.append((a, b, spec.total_seeds, 0.0, 0.0, 1.0))
                    continue
                g = dist.quantile(b)
                m = dist.mean()
                rows.append((a, b, spec.total_seeds, g, m, g / m))
    _write_table(args, ["alpha", "beta", "seeds", "G", "mean", "ratio"], rows,
                 {"alpha": alphas, "beta": betas, "seeds": args.seeds}, base)


def cmd_moments(args):
    spec = _apply_seeds(_load_spec(args.spec), args.seeds)
    dist = spread_distribution(spec, args.alpha)
    rows = [(n, dist.moment(n)) for n in range(1, args.order + 1)]
    _write_table(args, ["order", "moment"], rows, {"alpha": args.alpha, "order": args.order}, spec)


def cmd_simulate(args):
    cfg = SimConfig(args.replications, args.rng_seed, args.model, args.workers)
    spec = _apply_seeds(_load_spec(args.spec), args.seeds)
    if args.model == "non_cooperative":
        require_valid(spec)
        if spec.num_groups != 1:
            raise CliError(EXIT_INVALID, {"error": "argument",
                                          "message": "non_cooperative model needs a single group"})
        lam = float(spec.rates[0, 0] * spec.infectivity[0] * spec.susceptibility[0])
        samples = simulate_noncooperative(spec.population, lam, cfg)
        n = spec.population
        ks = ks_distance(samples, lambda t: 1.0 - cf.noncoop_ccdf(n, lam, t))
        alpha = 1.0
    else:
        samples = simulate_completion(spec, args.alpha, cfg)
        dist = spread_distribution(spec, args.alpha)
        ks = 0.0 if dist.is_trivial else ks_distance(samples, dist.cdf)
        alpha = args.alpha
    summary = dict(samples.metadata(), mean=samples.mean(), variance=samples.variance(),
                   std_error=samples.std_error(), ks=ks,
                   ks_critical_99=ks_critical_value(len(samples)), alpha=alpha)
    buf = io.StringIO()
    samples.to_csv(buf)
    if args.out:
        _emit(args, buf.getvalue(), summary, spec)
    sys.stdout.write(json.dumps(summary, indent=2, sort_keys=True) + "\n")


def cmd_hetero_sweep(args):
    values = np.linspace(0.0, args.gamma_max, args.grid_points)
    rows = []
    for a in _floats(args.alpha):
        grid = gamma_region(args.rate, args.size, a, args.beta, values, values, args.workers)
        rows.extend((a, g1, g2, d, int(m)) for g1, g2, d, m in grid.rows())
    _write_table(args, ["alpha", "gamma1", "gamma2", "delta_G", "member"], rows,
                 {"rate": args.rate, "size": args.size, "alpha": args.alpha, "beta": args.beta,
                  "grid_points": args.grid_points, "gamma_max": args.gamma_max})


def cmd_estimate(args):
    try:
        with open(args.trace) as fh:
            records = parse_trace(fh)
        with open(args.grouping) as fh:
            grouping = parse_grouping(fh)
    except OSError as exc:
        raise CliError(EXIT_INVALID, {"error": "io", "message": str(exc)})
    horizon = args.horizon if args.horizon else max(r.end for r in records)
    spec = estimate_spec(records, grouping, horizon, args.transfer_time)
    _emit(args, spec.to_json(indent=2) + "\n",
          {"trace": args.trace, "grouping": args.grouping, "horizon_s": horizon,
           "transfer_time_s": args.transfer_time})


def cmd_plan(args):
    spec = _load_spec(args.spec)
    if args.mode == "seeds":
        seeds = min_seeds_for_bound(spec, args.alpha, args.beta, args.t_bound, args.priority)
        answer = {"mode": "seeds", "seeds": list(seeds), "total_seeds": int(sum(seeds))}
    else:
        spec = _apply_seeds(spec, args.seeds)
        dist = spread_distribution(spec, args.alpha)
        answer = {"mode": "rate", "scale": rate_scale_for_bound(dist, args.beta, args.t_bound),
                  "current_G": dist.quantile(args.beta)}
    answer.update(alpha=args.alpha, beta=args.beta, t_bound=args.t_bound)
    _emit(args, json.dumps(answer, indent=2, sort_keys=True) + "\n", answer, spec)


def cmd_oracle(args):
    n, s, lam, a, b = args.size, args.seeds_k1, args.rate, args.alpha, args.beta
    dist = spread_distribution(homogeneous_spec(n, lam, s), a)
    out = {"size": n, "seeds": s, "rate": lam, "alpha": a, "beta": b}
    if dist.is_trivial:
        out.update(trivial=True)
    else:
        m1, m2 = dist.moment(1), dist.moment(2)
        out.update(mean_matrix=m1, mean_closed=cf.homog_mean_completion(n, s, lam, a),
                   variance_matrix=m2 - m1 * m1, variance_closed=cf.homog_variance(n, s, lam, a),
                   G=dist.quantile(b))
        probe = float(m1)
        out["survival_matrix"] = dist.survival(probe)
        try:
            out["survival_erlang"] = cf.generalized_erlang_ccdf(cf.stage_rates(n, s, lam, a), probe)
        except NearDegenerateRates:
            out["survival_erlang"] = None
    if s == 1 and a == 1.0 and n >= 3:
        lo, hi = cf.guaranteed_time_bounds(n, lam, b)
        out.update(bound_lower=lo, bound_upper=hi)
    out.update(noncoop_mean=cf.noncoop_mean(n, lam), noncoop_variance=cf.noncoop_variance(n, lam))
    _emit(args, json.dumps(out, indent=2, sort_keys=True) + "\n", out)


def cmd_contribution(args):
    spec = _apply_seeds(_load_spec(args.spec), args.seeds)
    rows = contribution_table(spec, args.alpha, args.beta, args.remove_seed)
    _write_table(args, ["group", "contribution"], rows,
                 {"alpha": args.alpha, "beta": args.beta, "remove_seed": args.remove_seed}, spec)


def cmd_gen_trace(args):
    spec = _load_spec(args.spec)
    require_valid(spec)
    records = generate_trace(spec, args.horizon, args.duration_mean, args.rng_seed, args.duration_model)
    buf = io.StringIO()
    export_trace(records, buf)
    params = {"horizon_s": args.horizon, "duration_mean_s": args.duration_mean,
              "rng_seed": args.rng_seed, "duration_model": args.duration_model}
    _emit(args, buf.getvalue(), params, spec)
    if args.grouping_out:
        with open(args.grouping_out, "w") as fh:
            fh.write("node,group\n")
            for node, g in spec_grouping(spec).items():
                fh.write(f"{node},{g}\n")


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spreadtime", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_text, spec=True):
        sp = sub.add_parser(name, help=help_text)
        sp.set_defaults(func=fn)
        if spec:
            sp.add_argument("--spec", required=True, help="network spec JSON file")
        sp.add_argument("--out", help="output file (also writes <out>.json)")
        sp.add_argument("--format", choices=("csv", "json"), default="csv")
        return sp

    sp = add("cdf", cmd_cdf, "completion-time CDF on a time grid")
    sp.add_argument("--alpha", type=float, required=True)
    sp.add_argument("--times", required=True, help="start:stop:count or comma list (hours)")
    sp.add_argument("--seeds", type=_ints)

    sp = add("guarantee", cmd_guarantee, "guaranteed times, means and ratios")
    sp.add_argument("--alpha", required=True, help="comma list")
    sp.add_argument("--beta", required=True, help="comma list")
    sp.add_argument("--seeds", type=_ints, help="comma list of total seed counts")

    sp = add("moments", cmd_moments, "raw moments of the completion time")
    sp.add_argument("--alpha", type=float, required=True)
    sp.add_argument("--order", type=int, default=2)
    sp.add_argument("--seeds", type=_ints)

    sp = add("simulate", cmd_simulate, "Monte Carlo samples and KS check")
    sp.add_argument("--alpha", type=float, default=1.0)
    sp.add_argument("--replications", type=int, default=10_000)
    sp.add_argument("--rng-seed", type=int, default=0)
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--model", choices=("cooperative", "non_cooperative"), default="cooperative")
    sp.add_argument("--seeds", type=_ints)

    sp = add("hetero-sweep", cmd_hetero_sweep, "two-community acceleration region", spec=False)
    sp.add_argument("--rate", type=float, default=1.0)
    sp.add_argument("--size", type=int, default=40)
    sp.add_argument("--alpha", default="0.3,0.5,0.7,1.0", help="comma list")
    sp.add_argument("--beta", type=float, default=0.9)
    sp.add_argument("--grid-points", type=int, default=41)
    sp.add_argument("--gamma-max", type=float, default=20.0)
    sp.add_argument("--workers", type=int, default=1)

    sp = add("estimate", cmd_estimate, "estimate a spec from a contact trace", spec=False)
    sp.add_argument("--trace", required=True)
    sp.add_argument("--grouping", required=True)
    sp.add_argument("--transfer-time", type=float, required=True, help="seconds")
    sp.add_argument("--horizon", type=float, help="seconds (default: last contact end)")

    sp = add("plan", cmd_plan, "seeds or rate scale needed to meet a time bound")
    sp.add_argument("--alpha", type=float, required=True)
    sp.add_argument("--beta", type=float, required=True)
    sp.add_argument("--t-bound", type=float, required=True, help="hours")
    sp.add_argument("--mode", choices=("seeds", "rate"), default="seeds")
    sp.add_argument("--priority", type=_ints, help="group order for seed placement")
    sp.add_argument("--seeds", type=_ints)

    sp = add("oracle", cmd_oracle, "closed forms next to the matrix method (one group)", spec=False)
    sp.add_argument("--size", type=int, required=True)
    sp.add_argument("--rate", type=float, required=True)
    sp.add_argument("--seeds", dest="seeds_k1", type=int, default=1)
    sp.add_argument("--alpha", type=float, default=1.0)
    sp.add_argument("--beta", type=float, default=0.99)

    sp = add("contribution", cmd_contribution, "per-group node contribution")
    sp.add_argument("--alpha", type=float, required=True)
    sp.add_argument("--beta", type=float, required=True)
    sp.add_argument("--remove-seed", action="store_true")
    sp.add_argument("--seeds", type=_ints)

    sp = add("gen-trace", cmd_gen_trace, "synthetic contact trace from a spec")
    sp.add_argument("--horizon", type=float, required=True, help="seconds")
    sp.add_argument("--duration-mean", type=float, default=90.0, help="seconds")
    sp.add_argument("--duration-model", choices=("exponential", "fixed"), default="exponential")
    sp.add_argument("--rng-seed", type=int, default=0)
    sp.add_argument("--grouping-out", help="write the node,group map here")
    return p


def _fail(code, payload) -> int:
    sys.stderr.write(json.dumps(payload, sort_keys=True) + "\n")
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except CliError as exc:
        return _fail(exc.code, exc.payload)
    except SpecValidationError as exc:
        return _fail(EXIT_INVALID, {"error": "validation",
                                    "violations": [v._asdict() for v in exc.violations]})
    except TraceParseError as exc:
        return _fail(EXIT_INVALID, {"error": "trace", "line": exc.line, "message": str(exc)})
    except Infeasible as exc:
        return _fail(EXIT_INFEASIBLE, {"error": "infeasible", "message": str(exc)})
    except (NumericalFailure, InfiniteMoment) as exc:
        return _fail(EXIT_NUMERICAL, {"error": "numerical", "message": str(exc)})
    except TrivialCompletion as exc:
        return _fail(EXIT_INVALID, {"error": "trivial_completion", "message": str(exc)})
    except ValueError as exc:
        return _fail(EXIT_INVALID, {"error": "argument", "message": str(exc)})
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
