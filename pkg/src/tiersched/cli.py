"""Command-line entry points for simulation, serving, training, and checks."""

import argparse
import json
import os
import sys
import tempfile
from datetime import datetime, timezone
from typing import List, Optional

from . import automation, timeparse
from .agent import SchedulingAgent
from .config import ENV_VAR, load_config
from .clock import SimClock
from .selfcheck import FIXTURES_PATH, render_report, run_all
from .simulator import SCENARIOS, Simulator, build_scenario

# ===== Helpers =====


def _fail(message: str, **extra) -> int:
    payload = {"error": message}
    payload.update(extra)
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)
    return 1


def _emit(payload) -> None:
    print(json.dumps(payload, indent=2, sort_keys=True))


def _add_config_arg(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", default=None,
                        help=f"config JSON path (default: ${ENV_VAR} if set)")


def _records(args) -> List[automation.BallotResponseRecord]:
    if getattr(args, "corpus", None):
        return automation.load_corpus(args.corpus)
    return automation.generate_ballot_corpus(args.n_ballots, k=args.k, seed=args.seed)


# ===== Commands =====


def cmd_simulate(args) -> int:
    config = load_config(args.config)
    data_dir = args.data_dir or tempfile.mkdtemp(prefix="tiersched-sim-")
    sim = Simulator(build_scenario(args.scenario, args.seed), data_dir,
                    seed=args.seed, config=config)
    metrics = sim.run(strict=args.strict)
    if args.out:
        sim.export(args.out)
    if not args.per_request:
        metrics = {k: v for k, v in metrics.items() if k != "per_request"}
    _emit(metrics)
    if metrics["expectation_failures"] or metrics["event_bound_violations"]:
        return _fail("scenario expectations not met",
                     scenario=args.scenario,
                     expectation_failures=metrics["expectation_failures"],
                     event_bound_violations=metrics["event_bound_violations"])
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .api import create_live_app

    config = load_config(args.config)
    data_dir = args.data_dir or tempfile.mkdtemp(prefix="tiersched-serve-")
    app = create_live_app(data_dir, scenario=args.scenario, seed=args.seed,
                          config=config)
    print(f"serving {args.scenario} from {data_dir} on "
          f"http://{args.host}:{args.port}", file=sys.stderr)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def cmd_train_classifier(args) -> int:
    records = _records(args)
    model, report = automation.train_classifier(records, seed=args.seed)
    if args.out:
        model.save(args.out)
        report["model_path"] = args.out
    _emit(report)
    return 0


def cmd_eval_classifier(args) -> int:
    model = automation.LogisticModel.load(args.model)
    records = _records(args)
    report = automation.evaluate_classifier(model, records, automation.load_dictionary())
    _emit(report)
    return 0


def cmd_eval_extractor(args) -> int:
    with open(args.fixtures, "r", encoding="utf-8") as fh:
        cases = json.load(fh)["cases"]
    failures = []
    for index, case in enumerate(cases):
        exprs = timeparse.scan_message(case["body"], f"case-{index}")
        selection = timeparse.select_meeting_fields(exprs, case["body"],
                                                    case["assistant_name"])
        got = {"duration": selection.duration.text if selection.duration else None,
               "date": selection.date.text if selection.date else None}
        if got != case["expected"]:
            failures.append({"case": index, "got": got, "want": case["expected"]})
    _emit({"cases": len(cases), "matched": len(cases) - len(failures),
           "failures": failures})
    return 0 if not failures else _fail("extractor fixtures failed",
                                        failed=len(failures))


def cmd_gen_corpus(args) -> int:
    records = automation.generate_ballot_corpus(args.n_ballots, k=args.k,
                                                seed=args.seed)
    lines = [json.dumps(r.to_dict(), sort_keys=True) for r in records]
    if args.out == "-":
        for line in lines:
            print(line)
    else:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
        _emit({"records": len(records), "ballots": args.n_ballots, "path": args.out})
    return 0


def cmd_inspect(args) -> int:
    if not os.path.isdir(args.data_dir):
        return _fail("no such data directory", data_dir=args.data_dir)
    config = load_config(args.config)
    agent = SchedulingAgent(config, args.data_dir,
                            SimClock(datetime.now(timezone.utc)))
    try:
        _emit(agent.inspect(args.request_id))
    except KeyError:
        return _fail("unknown request", request_id=args.request_id)
    return 0


def cmd_selfcheck(args) -> int:
    results = run_all(seed=args.seed)
    print(render_report(results))
    return 0 if all(r.passed for r in results) else 1


# ===== Parser =====


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tiersched",
        description="Tiered meeting-scheduling agent: simulate, serve, train, check.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a scripted scenario with scripted workers")
    p.add_argument("--scenario", default="mixed_200",
                   choices=sorted(n for n in SCENARIOS if n != "live_console"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--data-dir", default=None, help="agent state dir (default: temp)")
    p.add_argument("--out", default=None, help="export metrics/transcript here")
    p.add_argument("--strict", action="store_true",
                   help="raise on unmet scenario expectations")
    p.add_argument("--per-request", action="store_true",
                   help="include the per-request table in the output")
    _add_config_arg(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("serve", help="serve the task API for human workers")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--scenario", default="live_console",
                   choices=sorted(SCENARIOS))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--data-dir", default=None)
    _add_config_arg(p)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("train-classifier", help="train the ballot-reply classifier")
    p.add_argument("--corpus", default=None, help="JSONL corpus (default: generated)")
    p.add_argument("--n-ballots", type=int, default=2000)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="save the trained model JSON here")
    p.set_defaults(func=cmd_train_classifier)

    p = sub.add_parser("eval-classifier", help="evaluate a saved classifier")
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", default=None)
    p.add_argument("--n-ballots", type=int, default=500)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--seed", type=int, default=1)
    p.set_defaults(func=cmd_eval_classifier)

    p = sub.add_parser("eval-extractor", help="check extraction fixtures")
    p.add_argument("--fixtures", default=FIXTURES_PATH)
    p.set_defaults(func=cmd_eval_extractor)

    p = sub.add_parser("gen-corpus", help="write a synthetic ballot-reply corpus")
    p.add_argument("--n-ballots", type=int, default=500)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="-", help="JSONL path, or - for stdout")
    p.set_defaults(func=cmd_gen_corpus)

    p = sub.add_parser("inspect", help="print request state from a data directory")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--request-id", default=None)
    _add_config_arg(p)
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("selfcheck", help="run the built-in verification suite")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_selfcheck)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except KeyboardInterrupt:
        return 1
    except Exception as exc:  # surface a structured error, not a traceback
        return _fail(f"{type(exc).__name__}: {exc}")


if __name__ == "__main__":
    sys.exit(main())
