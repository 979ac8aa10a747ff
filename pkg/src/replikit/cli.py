"""Batch CLI: partition verification/search, coin experiments, threshold
learning experiments, and report inspection.

Every command is deterministic given its flags; reports carry no wall-clock
by default, so repeating an invocation reproduces the output byte for byte.
Exit codes: 0 on success (a failed verification or a low replication rate
is data, not an error), 1 when a hard invariant is violated (an output list
exceeding its verified bound), 2 on usage or configuration errors.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields
from pathlib import Path

from .harness import (
    ExperimentConfig,
    ReplicationReport,
    run_cert_experiment,
    run_list_experiment,
)
from .partitions import (
    ProbePlan,
    SearchBudget,
    build_partition,
    default_partition,
    load_spec,
    search_shifts,
    verify_secludedness,
)
from .rounding import required_ell

VERIFY_SCHEMA = "replikit/verification-report/v1"
SEARCH_SCHEMA = "replikit/search-report/v1"


def _csv_floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated float list: {text!r}")


def _json_text(d: dict) -> str:
    return json.dumps(d, sort_keys=True, indent=2) + "\n"


def _emit(text: str, out: str | None):
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _merged_config(args, **forced) -> ExperimentConfig:
    base: dict = {}
    if getattr(args, "config", None):
        base = json.loads(Path(args.config).read_text(encoding="utf-8"))
    for key, value in forced.items():
        if value is not None:
            base[key] = value
    return ExperimentConfig.from_json_dict(base)


def _finish_experiment(report: ReplicationReport, args) -> int:
    _emit(report.to_json(), args.out)
    if report.hard_violations:
        for msg in report.hard_violations:
            print(f"hard violation: {msg}", file=sys.stderr)
        return 1
    return 0


# -- partition ----------------------------------------------------------------


def _cmd_partition_verify(args) -> int:
    if (args.spec is None) == (args.dim is None):
        raise ValueError("give exactly one of --spec / --dim")
    if args.spec is not None:
        spec, profile = load_spec(args.spec)
        partition = build_partition(spec, profile)
    else:
        partition = default_partition(args.dim)
        spec, profile = partition.spec, partition.profile
    k = args.k
    radius = args.radius
    if k is None:
        if profile is None:
            raise ValueError("--k is required when the spec has no profile")
        k = profile.k
    if radius is None:
        if profile is None:
            raise ValueError("--radius is required when the spec has no profile")
        radius = profile.rho
    plan = ProbePlan(n_random=args.probes, seed=args.seed)
    report = verify_secludedness(partition, radius, k, plan)
    doc = {
        "schema": VERIFY_SCHEMA,
        "spec": spec.to_json_dict(),
        "eps": radius,
        "k": k,
        "probes": args.probes,
        "seed": args.seed,
    }
    doc.update(report.to_json_dict())
    _emit(_json_text(doc), args.out)
    return 0


def _cmd_partition_search(args) -> int:
    budget = SearchBudget(candidates=args.budget) if args.budget else SearchBudget()
    result = search_shifts(args.dim, seed=args.seed, budget=budget)
    doc = {
        "schema": SEARCH_SCHEMA,
        "dim": args.dim,
        "seed": args.seed,
        "candidates_scored": result.scored,
        "spec": result.spec.to_json_dict(),
        "rho": repr(float(result.rho)),
        "passed": result.report.passed,
        "profile": result.report.profile.to_json_dict(),
    }
    _emit(_json_text(doc), args.out)
    return 0


# -- coins --------------------------------------------------------------------


def _cmd_coins_list(args) -> int:
    cfg = _merged_config(
        args, algorithm="coins", mode="list", dim=args.dim, eps=args.eps,
        delta=args.delta, truth=args.bias, runs=args.runs, seed=args.seed,
        partition_spec=args.spec,
    )
    return _finish_experiment(run_list_experiment(cfg, args.threads), args)


def _cmd_coins_cert(args) -> int:
    cfg = _merged_config(
        args, algorithm="coins", mode="cert", dim=args.dim, eps=args.eps,
        delta=args.delta, truth=args.bias, seed=args.seed, cert_r=args.cert,
        runs_per_cert=args.runs, sample_certs=args.sample_certs,
    )
    if args.ell is not None:
        need = required_ell(cfg.dim, cfg.delta)
        if args.ell != need:
            raise ValueError(
                f"--ell {args.ell} inconsistent with dim={cfg.dim}, "
                f"delta={cfg.delta} (need {need})"
            )
    return _finish_experiment(run_cert_experiment(cfg, args.threads), args)


# -- learn --------------------------------------------------------------------


def _cmd_learn_threshold(args) -> int:
    forced = dict(
        algorithm="threshold", mode=args.mode, dim=args.dim, eps=args.eps,
        delta=args.delta, truth=args.truth, seed=args.seed, nu=args.nu,
        promise_c=args.promise_c, unrestricted=args.unrestricted,
        partition_spec=args.spec,
    )
    if args.mode in ("cert", "adaptive-cert"):
        forced.update(cert_r=args.cert, runs_per_cert=args.runs)
        cfg = _merged_config(args, **forced)
        report = run_cert_experiment(cfg, args.threads)
    else:
        forced.update(runs=args.runs)
        cfg = _merged_config(args, **forced)
        report = run_list_experiment(cfg, args.threads)
    return _finish_experiment(report, args)


# -- report -------------------------------------------------------------------


def _report_from_json_dict(d: dict) -> ReplicationReport:
    kwargs = {f.name: d[f.name] for f in fields(ReplicationReport) if f.name in d}
    return ReplicationReport(**kwargs)


def _show_replication(d: dict) -> str:
    rep = _report_from_json_dict(d)
    lines = [f"kind: {rep.kind}", f"runs: {rep.runs}",
             f"metric: {rep.error_metric} (eps {rep.eps})"]
    if rep.kind == "list":
        bound = "unverified" if rep.list_bound is None else rep.list_bound
        lines.append(f"list size: {rep.list_size} (bound {bound})")
        lines.append(f"max error: {rep.max_error}")
        lines.append(f"success fraction: {rep.success_fraction}")
        lines.append("hard violations: "
                     + ("none" if not rep.hard_violations else "; ".join(rep.hard_violations)))
        lines.append("outputs:")
        for row in rep.outputs:
            lines.append(f"  id={row['id']} count={row['count']} "
                         f"frequency={row['frequency']} error={row['error']}")
    else:
        lines.append(f"ell: {rep.ell} certificates: {len(rep.cert_rows)} "
                     f"runs per certificate: {rep.runs_per_cert}")
        lines.append(f"replicating: {rep.replicating_count}/{len(rep.cert_rows)} "
                     f"(fraction {rep.replicating_fraction}, floor {rep.slack['floor']})")
        lines.append(f"predicted bad certificates: {rep.predicted_bad}")
        if rep.non_evidentiary:
            lines.append("warning: runs_per_cert < 5, unanimity is weak evidence")
        for row in rep.cert_rows:
            tag = "replicating" if row["replicating"] else "NOT replicating"
            lines.append(f"  r={row['r']} {tag} distinct={len(row['counts'])} "
                         f"max_error={row['max_error']}")
    return "\n".join(lines) + "\n"


def _show_verification(d: dict) -> str:
    prof = d["profile"]
    lines = [
        "kind: partition-verification",
        f"passed: {d['passed']}",
        f"k: {prof['k']} rho: {prof['rho']} probes: {prof['probes']}",
    ]
    if prof.get("witness") is not None:
        lines.append(f"witness: {prof['witness']} (members met: {prof.get('max_members')})")
    for v in d.get("violations", []):
        lines.append(f"  violation at {v['probe']}: {v['count']} members")
    return "\n".join(lines) + "\n"


def _show_search(d: dict) -> str:
    lines = [
        "kind: partition-search",
        f"dim: {d['dim']} candidates scored: {d['candidates_scored']}",
        f"best rho: {d['rho']} (passed: {d['passed']})",
        f"shifts: {d['spec'].get('shifts', [])}",
    ]
    return "\n".join(lines) + "\n"


def _cmd_report_show(args) -> int:
    d = json.loads(Path(getattr(args, "in")).read_text(encoding="utf-8"))
    schema = d.get("schema", "")
    if schema == VERIFY_SCHEMA or "passed" in d and "profile" in d:
        if args.csv:
            raise ValueError("--csv applies to replication reports only")
        sys.stdout.write(_show_verification(d))
        return 0
    if schema == SEARCH_SCHEMA:
        if args.csv:
            raise ValueError("--csv applies to replication reports only")
        sys.stdout.write(_show_search(d))
        return 0
    rep = _report_from_json_dict(d)
    if args.csv:
        rep.save_csv(args.csv)
    sys.stdout.write(_show_replication(d))
    return 0


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="replikit",
        description="Replicable estimation experiments: partitions, coins, thresholds.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="master seed")
    common.add_argument("--out", help="write the JSON report here instead of stdout")

    runner = argparse.ArgumentParser(add_help=False, parents=[common])
    runner.add_argument("--threads", type=int, default=1, help="worker threads")
    runner.add_argument("--config", help="JSON experiment config; flags override it")

    p_part = sub.add_parser("partition", help="secluded partition tools")
    part_sub = p_part.add_subparsers(dest="subcommand", required=True)
    pv = part_sub.add_parser("verify", parents=[common],
                             help="probe-sweep a partition's seclusion claim")
    pv.add_argument("--spec", help="partition spec JSON file")
    pv.add_argument("--dim", type=int, help="use the shipped partition for this dim")
    pv.add_argument("--radius", type=float, help="ball radius (default: profile rho)")
    pv.add_argument("--k", type=int, help="member bound (default: profile k)")
    pv.add_argument("--probes", type=int, default=100_000, help="random probes")
    pv.set_defaults(func=_cmd_partition_verify)
    ps = part_sub.add_parser("search", parents=[common],
                             help="search shift matrices for a good radius")
    ps.add_argument("--dim", type=int, required=True)
    ps.add_argument("--budget", type=int, help="candidate matrices to score")
    ps.set_defaults(func=_cmd_partition_search)

    p_coins = sub.add_parser("coins", help="replicable d-coin bias estimation")
    coins_sub = p_coins.add_subparsers(dest="subcommand", required=True)
    for name, fn in (("estimate-list", _cmd_coins_list), ("estimate-cert", _cmd_coins_cert)):
        pc = coins_sub.add_parser(name, parents=[runner])
        pc.add_argument("--dim", type=int)
        pc.add_argument("--eps", type=float)
        pc.add_argument("--delta", type=float)
        pc.add_argument("--bias", type=_csv_floats, help="true biases, comma-separated")
        pc.add_argument("--runs", type=int,
                        help="runs (per certificate for estimate-cert)")
        if name == "estimate-list":
            pc.add_argument("--spec", help="partition spec JSON file")
        else:
            pc.add_argument("--ell", type=int, help="certificate length (checked)")
            certs = pc.add_mutually_exclusive_group()
            certs.add_argument("--cert", type=int, help="test a single certificate r")
            certs.add_argument("--sweep-certs", action="store_true",
                               help="exhaustive certificate sweep (default)")
            pc.add_argument("--sample-certs", type=int,
                            help="sampled sweep size when ell > 16")
        pc.set_defaults(func=fn)

    p_learn = sub.add_parser("learn", help="replicable SQ learning experiments")
    learn_sub = p_learn.add_subparsers(dest="subcommand", required=True)
    pl = learn_sub.add_parser("threshold", parents=[runner])
    pl.add_argument("--dim", type=int)
    pl.add_argument("--eps", type=float)
    pl.add_argument("--delta", type=float)
    pl.add_argument("--truth", type=_csv_floats, help="threshold box, comma-separated")
    pl.add_argument("--mode", choices=["list", "cert", "adaptive-cert", "adaptive-list"],
                    default="list")
    pl.add_argument("--runs", type=int, help="runs (per certificate in cert modes)")
    pl.add_argument("--promise-c", dest="promise_c", type=float,
                    help="promise class lower corner")
    pl.add_argument("--nu", type=float, help="override the answer-rounding scale")
    pl.add_argument("--unrestricted", action=argparse.BooleanOptionalAction,
                    help="promise-free variant (one extra query)")
    pl.add_argument("--cert", type=int, help="single certificate r (cert modes)")
    pl.add_argument("--spec", help="partition spec JSON file (list mode)")
    pl.set_defaults(func=_cmd_learn_threshold)

    p_rep = sub.add_parser("report", help="inspect saved reports")
    rep_sub = p_rep.add_subparsers(dest="subcommand", required=True)
    pr = rep_sub.add_parser("show")
    pr.add_argument("--in", required=True, help="report JSON file")
    pr.add_argument("--csv", help="also export the table as CSV here")
    pr.set_defaults(func=_cmd_report_show)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
