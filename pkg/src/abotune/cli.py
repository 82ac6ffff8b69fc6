"""Command-line interface: ``abotune {search,fit-prior,report,simulate}``.

Exit codes: 0 on success, 1 on a configuration or input error, 2 when a
search finishes without a single successful evaluation.  Set ``ABO_LOG`` to
``error``, ``info`` or ``debug`` to control logging.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .exceptions import EmptyHistoryError
from .executor import SearchBudget, run_search, write_report
from .history import read_history_csv
from .metrics import average_traces, best_trace, mean_best, metrics_report, trace_to_csv
from .priors import UniformPrior, prior_from_json
from .space import ParameterSpace
from .surrogate import SURROGATE_KINDS
from .transfer import DEFAULT_Q, HistoryTable, compose_prior, fit_vae_prior, gaussian_prior
from .tvae import TvaeConfig
from .workloads import fit_surrogate_workload, load_workload

log = logging.getLogger("abotune")

EXIT_OK, EXIT_CONFIG, EXIT_NO_OK = 0, 1, 2
PRIOR_KINDS = ("uniform", "vae", "gaussian", "file")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


class ConfigError(Exception):
    pass


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="abotune", description="Asynchronous Bayesian autotuning with transfer learning.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("search", help="run a search and write its history")
    s.add_argument("--space", required=True, help="parameter space JSON")
    s.add_argument("--workload", required=True, help="synthetic:FILE.json or surrogate:FILE.csv|FILE.npz")
    s.add_argument("--surrogate", choices=SURROGATE_KINDS, default="rf")
    s.add_argument("--prior", default="uniform", help="uniform | vae:HISTORY.csv | gaussian:HISTORY.csv | file:PRIOR.json")
    s.add_argument("--prev-space", help="space of the prior's history (defaults to --space)")
    s.add_argument("--q", type=float, default=DEFAULT_Q, help="top quantile kept for the VAE prior")
    s.add_argument("--vae-epochs", type=_positive_int, default=TvaeConfig.epochs)
    s.add_argument("--kappa", type=float, default=1.96)
    s.add_argument("--liar", choices=("worst", "best", "mean"), default="worst")
    s.add_argument("--candidates", type=_positive_int, default=10_000, help="prior samples ranked per pick")
    s.add_argument("--workers", type=_positive_int, default=1)
    s.add_argument("--max-evals", type=_positive_int)
    s.add_argument("--wall-clock", type=float, help="search time limit in seconds")
    s.add_argument("--timeout", type=float, default=600.0, help="per-evaluation limit in seconds")
    s.add_argument("--time-scale", type=float, default=1.0, help="sleep scaling for real-clock runs")
    s.add_argument("--clock", choices=("virtual", "real"), default="virtual")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", default="history.csv", help="history CSV path")
    s.add_argument("--report", help="report JSON path (default: next to --out)")

    f = sub.add_parser("fit-prior", help="fit a prior from a previous history")
    f.add_argument("--history", required=True)
    f.add_argument("--prev-space", required=True, help="space the history was recorded on")
    f.add_argument("--space", help="space of the new search (defaults to --prev-space)")
    f.add_argument("--kind", choices=("vae", "gaussian"), default="vae")
    f.add_argument("--q", type=float, default=DEFAULT_Q)
    f.add_argument("--vae-epochs", type=_positive_int, default=TvaeConfig.epochs)
    f.add_argument("--seed", type=int, required=True)
    f.add_argument("--out", required=True, help="prior JSON path")

    r = sub.add_parser("report", help="compute metrics for one or more histories")
    r.add_argument("histories", nargs="+")
    r.add_argument("--space", required=True)
    r.add_argument("--baseline", help="history of the reference search")
    r.add_argument("--t-max", type=float, help="horizon in seconds (default: last completion)")
    r.add_argument("--workers", type=_positive_int, default=1)
    r.add_argument("--timeout", type=float, default=600.0)
    r.add_argument("--out", help="report JSON path (default: stdout)")
    r.add_argument("--trace-dir", help="directory for per-history t,R CSV files")

    m = sub.add_parser("simulate", help="fit a surrogate workload on a history")
    m.add_argument("--history", required=True)
    m.add_argument("--space", required=True)
    m.add_argument("--out", required=True, help="surrogate workload .npz path")
    m.add_argument("--n-trees", type=_positive_int, default=100)
    m.add_argument("--timeout", type=float, default=600.0, help="runtime imputed for failed rows")
    m.add_argument("--seed", type=int, required=True)
    return parser


def _load_space(path) -> ParameterSpace:
    return ParameterSpace.load(path)


def _split_spec(spec: str, kinds) -> tuple[str, str | None]:
    kind, _, arg = spec.partition(":")
    if kind not in kinds:
        raise ConfigError(f"unknown kind {kind!r} in {spec!r} (expected one of {', '.join(kinds)})")
    if kind != "uniform" and not arg:
        raise ConfigError(f"{spec!r} needs a file argument")
    return kind, arg or None


def _fit_prior(kind, history_path, prev_space, space, q, epochs, seed):
    history = HistoryTable.from_search(read_history_csv(history_path, prev_space))
    if kind == "vae":
        base = fit_vae_prior(history, q, TvaeConfig(epochs=epochs), seed=seed)
    else:
        base = gaussian_prior(history)
    provenance = {"prior": kind, "source_history": str(history_path), "q": q if kind == "vae" else None, "seed": seed}
    return compose_prior(base, prev_space, space), provenance


def _resolve_prior(args, space):
    kind, arg = _split_spec(args.prior, PRIOR_KINDS)
    if kind == "uniform":
        return UniformPrior(space), {"prior": "uniform", "source_history": None, "q": None, "seed": args.seed}
    if kind == "file":
        with open(arg) as fh:
            d = json.load(fh)
        prior = prior_from_json(d["prior"] if "prior" in d and "kind" not in d else d)
        provenance = dict(d.get("provenance", {"prior": prior.kind}))
        provenance["artifact"] = arg
        if prior.space.names != space.names:
            prior = compose_prior(prior, prior.space, space)
        return prior, provenance
    prev_space = _load_space(args.prev_space) if args.prev_space else space
    return _fit_prior(kind, arg, prev_space, space, args.q, args.vae_epochs, args.seed)


def _resolve_workload(spec, space, time_scale, seed):
    kind, arg = _split_spec(spec, ("synthetic", "surrogate"))
    if kind == "synthetic" or arg.endswith(".npz"):
        return load_workload(arg, space, time_scale)
    return fit_surrogate_workload(arg, space, {"seed": seed}, time_scale=time_scale)


def cmd_search(args) -> int:
    space = _load_space(args.space)
    workload = _resolve_workload(args.workload, space, args.time_scale, args.seed)
    prior, provenance = _resolve_prior(args, space)
    budget = SearchBudget(args.wall_clock, args.max_evals, args.timeout)
    optimizer_config = {
        "surrogate": args.surrogate,
        "kappa": args.kappa,
        "liar": args.liar,
        "n_candidates": args.candidates,
        "failure_cost": None,
    }
    history = run_search(
        space, prior, optimizer_config, workload, args.workers, budget, args.clock, args.seed, provenance=provenance
    )
    out = Path(args.out)
    history.write_csv(out)
    report_path = Path(args.report) if args.report else out.with_suffix(".report.json")
    write_report(history, report_path, {"space": str(args.space), "workload": args.workload})
    log.info("wrote %d records to %s", len(history), out)
    if not history.ok_records:
        print("no successful evaluation", file=sys.stderr)
        return EXIT_NO_OK
    print(json.dumps({"best_config": history.metadata["best_config"], "best_objective": history.metadata["best_objective"]}))
    return EXIT_OK


def cmd_fit_prior(args) -> int:
    prev_space = _load_space(args.prev_space)
    space = _load_space(args.space) if args.space else prev_space
    prior, provenance = _fit_prior(args.kind, args.history, prev_space, space, args.q, args.vae_epochs, args.seed)
    with open(args.out, "w") as fh:
        json.dump({"prior": prior.to_json(), "provenance": provenance}, fh)
    return EXIT_OK


def cmd_report(args) -> int:
    space = _load_space(args.space)
    histories = [read_history_csv(p, space) for p in args.histories]
    baseline = read_history_csv(args.baseline, space) if args.baseline else None
    t_max = args.t_max
    if t_max is None:
        ends = [r.t_end for h in histories + ([baseline] if baseline else []) for r in h.records]
        t_max = max(ends, default=0.0)
        if not t_max > 0:
            raise ConfigError("cannot infer a positive horizon; pass --t-max")
    out = {"t_max": t_max, "baseline": args.baseline, "histories": {}}
    traces = []
    for path, history in zip(args.histories, histories):
        report = metrics_report(history, args.workers, t_max, baseline, args.timeout)
        out["histories"][path] = report.to_json()
        traces.append(best_trace(history, t_max, args.timeout))
    if len(traces) > 1:
        avg = average_traces(traces)
        out["average"] = {"r_best": avg.final, "mean_best": mean_best(avg)}
    if args.trace_dir:
        trace_dir = Path(args.trace_dir)
        trace_dir.mkdir(parents=True, exist_ok=True)
        for path, trace in zip(args.histories, traces):
            (trace_dir / (Path(path).stem + ".trace.csv")).write_text(trace_to_csv(trace))
    text = json.dumps(out, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return EXIT_OK


def cmd_simulate(args) -> int:
    space = _load_space(args.space)
    workload = fit_surrogate_workload(args.history, space, {"n_trees": args.n_trees, "seed": args.seed}, timeout_value=args.timeout)
    workload.save(args.out)
    return EXIT_OK


COMMANDS = {"search": cmd_search, "fit-prior": cmd_fit_prior, "report": cmd_report, "simulate": cmd_simulate}


def _configure_logging():
    level = os.environ.get("ABO_LOG", "error").upper()
    if level not in ("ERROR", "INFO", "DEBUG"):
        level = "ERROR"
    logging.basicConfig(level=getattr(logging, level), format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _configure_logging()
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except EmptyHistoryError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_OK if args.command == "search" else EXIT_CONFIG
    except (ConfigError, ValueError, KeyError, OSError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
