"""Command line entry points.

    shopwatch simulate run <scenario.json | builtin name> [--report out.json]
    shopwatch simulate generate-dataset --n 1103 --seed 7 -o dataset.jsonl
    shopwatch simulate report <report.json>
    shopwatch train --dataset dataset.jsonl -o model.json
    shopwatch agent --config agent.json --source frames.jsonl
    shopwatch cloud --catalog catalog.json --port 8770 --state-dir .state
"""

from __future__ import annotations

import argparse
import json
import logging
import socket
import sys
from pathlib import Path

from .classify import kfold_cv, load_dataset, model_to_dict, save_dataset, train_selected
from .edge import AgentConfig, EdgeAgent
from .features import read_landmark_stream
from .posegen import PoseGeneratorParams, generate_pose_dataset
from .simulator import BUILTIN_SCENARIOS, Scenario, builtin_scenario, run_scenario


def _scenario_from_arg(arg: str) -> Scenario:
    if arg in BUILTIN_SCENARIOS:
        return builtin_scenario(arg)
    return Scenario.from_file(arg)


def _cmd_simulate_run(args) -> int:
    scenario = _scenario_from_arg(args.scenario)
    report = run_scenario(scenario, log_dir=args.log_dir)
    payload = report.to_dict()
    if args.report:
        Path(args.report).write_text(json.dumps(payload, indent=2))
    _print_report(payload)
    return 1 if report.failed else 0


def _print_report(payload: dict) -> None:
    print(f"scenario: {payload['scenario_name']} (seed {payload['seed']})")
    rows = [
        ("frames processed", payload["frames_processed"]),
        ("suspicion events", payload["events_emitted"]),
        ("uncorroborated", payload["events_uncorroborated"]),
        ("scripted thefts", payload["thefts_scripted"]),
        ("alerts", len(payload["alerts"])),
        ("true positives", payload["true_positives"]),
        ("false positives", payload["false_positives"]),
        ("misses", payload["misses"]),
        ("precision", f"{payload['precision']:.3f}"),
        ("recall", f"{payload['recall']:.3f}"),
    ]
    width = max(len(name) for name, _ in rows)
    for name, value in rows:
        print(f"  {name:<{width}}  {value}")
    if payload.get("failed"):
        print(f"  FAILED: {payload.get('failure')}")
    for alert in payload["alerts"]:
        print(
            f"  alert {alert['alert_id']}: product={alert['product_id']} "
            f"deficit={alert['deficit']} score={alert['event']['anomaly_score']:.2f}"
        )


def _cmd_generate_dataset(args) -> int:
    params = PoseGeneratorParams(jitter_sigma=args.sigma)
    samples = generate_pose_dataset(params, args.n, args.seed)
    save_dataset(samples, args.output)
    print(f"wrote {len(samples)} samples to {args.output}")
    return 0


def _cmd_report(args) -> int:
    payload = json.loads(Path(args.report).read_text())
    _print_report(payload)
    return 1 if payload.get("failed") else 0


def _cmd_train(args) -> int:
    data = load_dataset(args.dataset)
    report = kfold_cv(data, fold_count=args.folds, seed=args.seed, epochs=args.epochs)
    model = train_selected(data, report, epochs=args.epochs)
    metadata = {
        "seed": args.seed,
        "fold_accuracies": report.to_dict(),
        "selected_kind": report.selected_kind,
    }
    Path(args.output).write_text(json.dumps(model_to_dict(model, metadata)))
    print(
        f"selected {report.selected_kind}: "
        f"kNN mean={report.knn.mean_accuracy:.3f} (k={report.knn.params['k']}), "
        f"linear mean={report.linear.mean_accuracy:.3f}"
    )
    print(f"saved model to {args.output}")
    return 0


def _frame_source(source: str):
    if source.startswith("tcp://"):
        host, _, port = source[6:].partition(":")
        listener = socket.create_server((host, int(port)))
        conn, _ = listener.accept()
        return conn.makefile("rb")
    if source == "-":
        return sys.stdin
    return open(source, "rb")


def _cmd_agent(args) -> int:
    logging.basicConfig(level=getattr(logging, args.log_level.upper()))
    config = AgentConfig.from_file(args.config)
    agent = EdgeAgent(config)
    with _frame_source(args.source) as fh:
        stats = agent.run(read_landmark_stream(fh))
    print(json.dumps(stats.to_dict()))
    return 0


def _cmd_cloud(args) -> int:
    logging.basicConfig(level=getattr(logging, args.log_level.upper()))
    from .server import build_server

    server = build_server(
        catalog_path=args.catalog,
        host=args.host,
        port=args.port,
        state_dir=args.state_dir,
        token=args.token,
        staleness_ms=args.staleness_ms,
    )
    server.start()
    print(f"cloud service on {server.base_url} (Ctrl-C to stop)")
    try:
        server._thread.join()
    except KeyboardInterrupt:
        server.stop()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="shopwatch")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="scenario engine")
    sim_sub = sim.add_subparsers(dest="sim_command", required=True)

    run_p = sim_sub.add_parser("run", help="run a scenario end to end")
    run_p.add_argument("scenario", help=f"scenario JSON path or one of {', '.join(BUILTIN_SCENARIOS)}")
    run_p.add_argument("--report", help="write the run report JSON here")
    run_p.add_argument("--log-dir", help="persist decision/inventory logs for audit")
    run_p.set_defaults(func=_cmd_simulate_run)

    gen_p = sim_sub.add_parser("generate-dataset", help="synthetic labeled pose dataset")
    gen_p.add_argument("--n", type=int, default=1103)
    gen_p.add_argument("--seed", type=int, default=7)
    gen_p.add_argument("--sigma", type=float, default=2.0)
    gen_p.add_argument("-o", "--output", required=True)
    gen_p.set_defaults(func=_cmd_generate_dataset)

    rep_p = sim_sub.add_parser("report", help="pretty-print a run report")
    rep_p.add_argument("report")
    rep_p.set_defaults(func=_cmd_report)

    train_p = sub.add_parser("train", help="cross-validate both classifiers, keep the better")
    train_p.add_argument("--dataset", required=True)
    train_p.add_argument("--folds", type=int, default=10)
    train_p.add_argument("--seed", type=int, default=0)
    train_p.add_argument("--epochs", type=int, default=10)
    train_p.add_argument("-o", "--output", required=True)
    train_p.set_defaults(func=_cmd_train)

    agent_p = sub.add_parser("agent", help="store-side edge agent")
    agent_p.add_argument("--config", required=True, help="agent config JSON")
    agent_p.add_argument(
        "--source", required=True, help="landmark NDJSON file, '-' for stdin, or tcp://host:port"
    )
    agent_p.add_argument("--log-level", default="INFO")
    agent_p.set_defaults(func=_cmd_agent)

    cloud_p = sub.add_parser("cloud", help="cloud decision + inventory service")
    cloud_p.add_argument("--catalog", required=True, help="catalog JSON file")
    cloud_p.add_argument("--host", default="127.0.0.1")
    cloud_p.add_argument("--port", type=int, default=8770)
    cloud_p.add_argument("--state-dir", help="persist append-only logs here")
    cloud_p.add_argument("--token", default="")
    cloud_p.add_argument("--staleness-ms", type=int, default=60_000)
    cloud_p.add_argument("--log-level", default="INFO")
    cloud_p.set_defaults(func=_cmd_cloud)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
