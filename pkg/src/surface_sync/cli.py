"""surface-sync command line: serve, sim, check.

    surface-sync serve --config server.toml [--dump state.json] [--replay trace.jsonl]
    surface-sync sim --scenario s.json --server http://127.0.0.1:8787 --out trace.jsonl
    surface-sync check --traces traces/ --dump state.json
"""

from __future__ import annotations

import argparse
import asyncio
import json
import signal
import sys
from pathlib import Path

from surface_sync.datastore import Store, ingest
from surface_sync.server import ServerConfig, SurfaceSyncServer, load_config, replay_trace
from surface_sync.sim import (
    check_consistency,
    generate_scenario,
    load_scenario,
    load_traces,
    run_scenario,
)


def _build_store(config: ServerConfig) -> Store:
    if config.dataset_path:
        return ingest(config.dataset_path, config.dataset_format)
    return Store([])


def _cmd_serve(args: argparse.Namespace) -> int:
    config = load_config(args.config) if args.config else ServerConfig()
    store = _build_store(config)
    if args.replay:
        records = []
        with open(args.replay, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    records.append(json.loads(line))
        dump = replay_trace(records, config, store)
        text = json.dumps(dump, indent=1, sort_keys=True)
        if args.dump:
            Path(args.dump).write_text(text + "\n", encoding="utf-8")
        else:
            print(text)
        return 0

    async def main() -> None:
        server = SurfaceSyncServer(config, store, log_stream=sys.stderr, dump_path=args.dump)
        await server.start()
        stop = asyncio.Event()
        loop = asyncio.get_running_loop()
        for sig in (signal.SIGINT, signal.SIGTERM):
            loop.add_signal_handler(sig, stop.set)
        await stop.wait()
        await server.stop()

    asyncio.run(main())
    return 0


def _cmd_sim(args: argparse.Namespace) -> int:
    if args.scenario == "-":
        scenario = generate_scenario(args.seed, events=args.events)
    else:
        scenario = load_scenario(args.scenario)

    async def main() -> int:
        result = await run_scenario(scenario, args.server, args.session, args.out)
        if args.dump_out and result.dump is not None:
            Path(args.dump_out).write_text(
                json.dumps(result.dump, indent=1, sort_keys=True) + "\n", encoding="utf-8"
            )
        print(f"trace records: {len(result.records)}", file=sys.stderr)
        return 0

    return asyncio.run(main())


def _cmd_check(args: argparse.Namespace) -> int:
    traces = load_traces(args.traces)
    with open(args.dump, encoding="utf-8") as fh:
        dump = json.load(fh)
    report = check_consistency(traces, dump)
    for finding in report.findings:
        print(finding)
    if report.ok:
        print("consistency: OK "
              f"({len(traces)} actors, {sum(len(r) for r in traces.values())} records)")
        return 0
    print(f"consistency: {len(report.findings)} finding(s)", file=sys.stderr)
    return 1


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="surface-sync")
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="run the shared server")
    serve.add_argument("--config", help="TOML config path")
    serve.add_argument("--dump", help="write session dump here on quiesce/shutdown")
    serve.add_argument("--replay", help="re-run a recorded trace offline and dump state")
    serve.set_defaults(fn=_cmd_serve)

    sim = sub.add_parser("sim", help="run a scenario of simulated clients")
    sim.add_argument("--scenario", required=True, help="scenario JSON ('-' = generated)")
    sim.add_argument("--server", required=True, help="server base URL, e.g. http://127.0.0.1:8787")
    sim.add_argument("--out", help="trace output (JSONL)")
    sim.add_argument("--session", default="s1")
    sim.add_argument("--seed", type=int, default=1)
    sim.add_argument("--events", type=int, default=100)
    sim.add_argument("--dump-out", help="fetch the server dump here after the run")
    sim.set_defaults(fn=_cmd_sim)

    check = sub.add_parser("check", help="verify traces + dump against session invariants")
    check.add_argument("--traces", required=True, help="directory of *.jsonl traces")
    check.add_argument("--dump", required=True, help="server dump JSON")
    check.set_defaults(fn=_cmd_check)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    raise SystemExit(main())
