"""Command-line interface: each pipeline stage independently runnable.

Subcommands: gen-domain, gen-profile, simulate, featurize, train, eval,
recognize, experiment <p1|p2|p3|p4>, report.  Every subcommand accepts
--seed and --out; artifacts land under --out.  Exit code 0 on success,
1 with a diagnostic on stderr otherwise.  Worker-count overrides come from
the NEGREC_WORKERS environment variable only.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import nn
from .dataset import (
    derived_seed,
    label_vocabulary,
    load_campaign_config,
    load_features,
    load_split,
)
from .domains import (
    domain_from_json,
    domain_to_json,
    generate_domain,
    generate_profile,
    load_json,
    profile_from_json,
    profile_to_json,
    save_json,
)
from .experiments import (
    ScenarioSettings,
    evaluate,
    load_model_set,
    recognize,
    render_report,
    run_scenario,
    train_checkpoint_model,
    write_report,
)
from .features import Scenario, featurize_trace, write_feature_series, write_schema
from .protocol import read_traces, run_session, validate_trace, write_traces
from .strategies import detector_factory, make_pool


def _csv_ints(text: str) -> tuple[int, ...]:
    return tuple(int(part) for part in text.split(",") if part)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_domain(path: str):
    return domain_from_json(load_json(path))


def _load_profile(path: str):
    return profile_from_json(load_json(path))


def _cmd_gen_domain(args) -> int:
    values = _csv_ints(args.values)
    domain = generate_domain(len(values), values, args.seed, domain_id=args.name)
    out = _out_dir(args) / f"{domain.id}.json"
    save_json(domain_to_json(domain), out)
    print(out)
    return 0


def _cmd_gen_profile(args) -> int:
    domain = _load_domain(args.domain)
    profile = generate_profile(domain, args.seed, profile_id=args.name)
    out = _out_dir(args) / f"{profile.id}.json"
    save_json(profile_to_json(profile), out)
    print(out)
    return 0


def _cmd_simulate(args) -> int:
    domain = _load_domain(args.domain)
    profile_m = _load_profile(args.profile_m)
    profile_o = _load_profile(args.profile_o)
    pool = {factory.id: factory for factory in make_pool(args.pool_seed)}
    if args.opponent not in pool:
        raise ValueError(f"unknown opponent {args.opponent!r}; pool has {sorted(pool)}")
    detector = detector_factory()
    traces = []
    for k in range(args.sessions):
        trace = run_session(
            detector,
            pool[args.opponent],
            domain,
            profile_m,
            profile_o,
            args.deadline,
            derived_seed(args.seed, k),
        )
        validate_trace(trace, domain, args.deadline)
        traces.append(trace)
    out = _out_dir(args) / "traces.jsonl"
    write_traces(traces, out)
    print(out)
    return 0


def _cmd_featurize(args) -> int:
    domain = _load_domain(args.domain)
    profile_m = _load_profile(args.profile_m)
    profile_o = _load_profile(args.profile_o) if args.profile_o else None
    scenario = Scenario(args.scenario.upper())
    checkpoints = _csv_ints(args.checkpoints)
    traces = read_traces(args.traces)
    out = _out_dir(args)
    per_checkpoint = {cp: [] for cp in checkpoints}
    for trace in traces:
        for series in featurize_trace(
            trace, scenario, domain, profile_m, profile_o, checkpoints, args.deadline
        ):
            per_checkpoint[series.checkpoint].append(series)
    for cp, records in per_checkpoint.items():
        write_feature_series(records, out / f"features_cp{cp:03d}.jsonl")
    write_schema(scenario, out / "schema.json")
    print(out)
    return 0


def _cmd_train(args) -> int:
    campaign = Path(args.campaign)
    config = load_campaign_config(campaign)
    series = load_features(campaign, args.checkpoint)
    split = load_split(campaign)
    wanted = set(split[args.split])
    picked = [record for record in series if record.trace_id in wanted]
    labels = label_vocabulary([record.label for record in picked])
    out = _out_dir(args)
    _, history = train_checkpoint_model(
        picked,
        config.scenario,
        args.checkpoint,
        labels,
        seed=args.seed,
        epochs=args.epochs,
        models_dir=out,
    )
    print(f"trained checkpoint {args.checkpoint}: final loss {history[-1][1]:.4f}, "
          f"train acc {history[-1][2]:.3f}")
    return 0


def _cmd_eval(args) -> int:
    campaign = Path(args.campaign)
    params = nn.load_checkpoint(args.model)
    series = load_features(campaign, params.checkpoint_round)
    split = load_split(campaign)
    wanted = set(split[args.split])
    picked = [record for record in series if record.trace_id in wanted]
    result = evaluate(params, picked)
    doc = {
        "accuracy": result.accuracy,
        "n": result.n,
        "labels": list(params.labels),
        "confusion": result.confusion.tolist(),
    }
    out = _out_dir(args) / "eval.json"
    with open(out, "w", encoding="utf-8") as handle:
        json.dump(doc, handle, indent=2, sort_keys=True)
        handle.write("\n")
    print(f"accuracy {result.accuracy:.3f} on {result.n} records ({args.split} side)")
    print(out)
    return 0


def _cmd_recognize(args) -> int:
    model_set = load_model_set(args.model_set)
    traces = read_traces(args.traces)
    if not 0 <= args.trace_index < len(traces):
        raise ValueError(f"trace index {args.trace_index} outside [0, {len(traces)})")
    trace = traces[args.trace_index]
    domain = _load_domain(args.domain)
    profile_m = _load_profile(args.profile_m)
    profile_o = _load_profile(args.profile_o) if args.profile_o else None
    result = recognize(model_set, trace, domain, profile_m, profile_o, args.deadline)
    doc = {
        "trace_id": trace.trace_id,
        "true_label": trace.opponent_label,
        "checkpoint": result.checkpoint,
        "used_fallback": result.used_fallback,
        "posterior": [[label, prob] for label, prob in result.posterior],
    }
    out = _out_dir(args) / "recognition.json"
    with open(out, "w", encoding="utf-8") as handle:
        json.dump(doc, handle, indent=2, sort_keys=True)
        handle.write("\n")
    top = ", ".join(f"{label}={prob:.3f}" for label, prob in result.posterior[:3])
    print(f"checkpoint {result.checkpoint}: {top}")
    print(out)
    return 0


def _cmd_experiment(args) -> int:
    scenario = Scenario(args.scenario.upper())
    settings = ScenarioSettings(
        seed=args.seed,
        sessions_per_cell=args.sessions_per_cell,
        epochs=args.epochs,
    )
    if args.domains:
        settings.domains = tuple(args.domains.split(","))
    if args.checkpoints:
        settings.checkpoints = _csv_ints(args.checkpoints)
    report = run_scenario(scenario, _out_dir(args), settings)
    for line in render_report(report).splitlines()[:4]:
        print(line)
    print(Path(args.out) / "report.json")
    return 0


def _cmd_report(args) -> int:
    report_file = Path(args.experiment) / "report.json"
    with open(report_file, "r", encoding="utf-8") as handle:
        report = json.load(handle)
    out = _out_dir(args)
    write_report(report, out)
    print(render_report(report))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="negrec", description="Opponent-strategy recognition toolkit"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, **kwargs):
        p = sub.add_parser(name, **kwargs)
        p.add_argument("--seed", type=int, default=7)
        p.add_argument("--out", required=True, help="output directory")
        p.set_defaults(func=func)
        return p

    p = add("gen-domain", _cmd_gen_domain, help="generate a synthetic domain")
    p.add_argument("--values", required=True, help="values per issue, e.g. 3,3,2")
    p.add_argument("--name", default=None, help="domain id (default: derived)")

    p = add("gen-profile", _cmd_gen_profile, help="generate a random preference profile")
    p.add_argument("--domain", required=True, help="domain JSON file")
    p.add_argument("--name", default=None, help="profile id (default: derived)")

    p = add("simulate", _cmd_simulate, help="simulate sessions against one opponent")
    p.add_argument("--domain", required=True)
    p.add_argument("--profile-m", required=True, dest="profile_m")
    p.add_argument("--profile-o", required=True, dest="profile_o")
    p.add_argument("--opponent", required=True, help="pool strategy id")
    p.add_argument("--sessions", type=int, default=50)
    p.add_argument("--deadline", type=int, default=100)
    p.add_argument("--pool-seed", type=int, default=7, dest="pool_seed")

    p = add("featurize", _cmd_featurize, help="turn traces into feature records")
    p.add_argument("--traces", required=True)
    p.add_argument("--domain", required=True)
    p.add_argument("--profile-m", required=True, dest="profile_m")
    p.add_argument("--profile-o", default=None, dest="profile_o")
    p.add_argument("--scenario", required=True, choices=["P1", "P2", "P3", "P4", "p1", "p2", "p3", "p4"])
    p.add_argument("--checkpoints", default="20,40,60,80,100")
    p.add_argument("--deadline", type=int, default=100)

    p = add("train", _cmd_train, help="train one checkpoint model from a campaign")
    p.add_argument("--campaign", required=True, help="campaign directory")
    p.add_argument("--checkpoint", type=int, required=True)
    p.add_argument("--epochs", type=int, default=80)
    p.add_argument("--split", default="train", choices=["train", "test"])

    p = add("eval", _cmd_eval, help="evaluate a model on a campaign split")
    p.add_argument("--campaign", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--split", default="test", choices=["train", "test"])

    p = add("recognize", _cmd_recognize, help="rank strategies for one trace")
    p.add_argument("--model-set", required=True, dest="model_set")
    p.add_argument("--traces", required=True)
    p.add_argument("--trace-index", type=int, default=0, dest="trace_index")
    p.add_argument("--domain", required=True)
    p.add_argument("--profile-m", required=True, dest="profile_m")
    p.add_argument("--profile-o", default=None, dest="profile_o")
    p.add_argument("--deadline", type=int, default=100)

    p = add("experiment", _cmd_experiment, help="run a full problem scenario")
    p.add_argument("scenario", choices=["p1", "p2", "p3", "p4", "P1", "P2", "P3", "P4"])
    p.add_argument("--sessions-per-cell", type=int, default=50, dest="sessions_per_cell")
    p.add_argument("--epochs", type=int, default=80)
    p.add_argument("--domains", default=None, help="comma-separated domain names")
    p.add_argument("--checkpoints", default=None)

    p = add("report", _cmd_report, help="re-render report files from report.json")
    p.add_argument("--experiment", required=True, help="experiment directory")

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as err:  # surface a clean diagnostic, nonzero exit
        print(f"negrec: error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
