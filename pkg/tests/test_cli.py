"""CLI end-to-end: serve/sim/check/replay through real subprocesses."""

import json
import os
import signal
import socket
import subprocess
import sys
import time
from pathlib import Path

import pytest

from surface_sync.sim import generate_scenario, scenario_to_json

ROOT = Path(__file__).parent.parent


def _free_port() -> int:
    s = socket.socket()
    s.bind(("127.0.0.1", 0))
    port = s.getsockname()[1]
    s.close()
    return port


def _wait_for_port(port: int, timeout: float = 10.0) -> None:
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        try:
            with socket.create_connection(("127.0.0.1", port), timeout=0.2):
                return
        except OSError:
            time.sleep(0.05)
    raise TimeoutError(f"server never listened on {port}")


@pytest.fixture()
def server_proc(tmp_path, vessels_path):
    port = _free_port()
    config = tmp_path / "server.toml"
    config.write_text(
        f'listen = "127.0.0.1:{port}"\n'
        'session = "s1"\n'
        "heartbeat_interval_s = 0.0\n"
        "[dataset]\n"
        f'path = "{vessels_path}"\n'
        'format = "CSV"\n'
        "[tuio]\n"
        'bind = ""\n'
    )
    dump_path = tmp_path / "server_dump.json"
    proc = subprocess.Popen(
        [sys.executable, "-m", "surface_sync.cli", "serve",
         "--config", str(config), "--dump", str(dump_path)],
        stdout=subprocess.PIPE,
        stderr=subprocess.PIPE,
        text=True,
    )
    _wait_for_port(port)
    yield proc, port, config, dump_path
    if proc.poll() is None:
        proc.send_signal(signal.SIGTERM)
        proc.wait(timeout=10)


def test_cli_sim_and_check(tmp_path, server_proc):
    proc, port, config, dump_path = server_proc
    scenario_path = tmp_path / "scenario.json"
    scenario_path.write_text(json.dumps(scenario_to_json(generate_scenario(11, events=40))))
    traces_dir = tmp_path / "traces"
    traces_dir.mkdir()
    out = subprocess.run(
        [sys.executable, "-m", "surface_sync.cli", "sim",
         "--scenario", str(scenario_path),
         "--server", f"http://127.0.0.1:{port}",
         "--out", str(traces_dir / "trace.jsonl"),
         "--dump-out", str(tmp_path / "dump.json")],
        capture_output=True, text=True, timeout=120,
    )
    assert out.returncode == 0, out.stderr
    assert (traces_dir / "trace.jsonl").exists()

    check = subprocess.run(
        [sys.executable, "-m", "surface_sync.cli", "check",
         "--traces", str(traces_dir), "--dump", str(tmp_path / "dump.json")],
        capture_output=True, text=True, timeout=60,
    )
    assert check.returncode == 0, check.stdout + check.stderr
    assert "consistency: OK" in check.stdout

    # replay the trace offline: state must match the quiescence dump
    replay = subprocess.run(
        [sys.executable, "-m", "surface_sync.cli", "serve",
         "--config", str(config), "--replay", str(traces_dir / "trace.jsonl")],
        capture_output=True, text=True, timeout=60,
    )
    assert replay.returncode == 0, replay.stderr
    live = json.loads((tmp_path / "dump.json").read_text())
    assert json.loads(replay.stdout) == live

    # graceful shutdown writes the server-side dump file
    proc.send_signal(signal.SIGTERM)
    proc.wait(timeout=10)
    assert dump_path.exists()
    shutdown_dump = json.loads(dump_path.read_text())
    assert shutdown_dump["session"] == "s1"
    # structured logs: one JSON object per line with event/session fields
    stderr = proc.stderr.read()
    log_lines = [l for l in stderr.splitlines() if l.startswith("{")]
    assert log_lines
    for line in log_lines[:20]:
        record = json.loads(line)
        assert "event" in record and "session" in record


def test_cli_check_fails_on_tampered_trace(tmp_path, server_proc):
    proc, port, _, _ = server_proc
    scenario_path = tmp_path / "scenario.json"
    scenario_path.write_text(json.dumps(scenario_to_json(generate_scenario(12, events=30))))
    traces_dir = tmp_path / "traces"
    traces_dir.mkdir()
    trace_path = traces_dir / "trace.jsonl"
    subprocess.run(
        [sys.executable, "-m", "surface_sync.cli", "sim",
         "--scenario", str(scenario_path),
         "--server", f"http://127.0.0.1:{port}",
         "--out", str(trace_path),
         "--dump-out", str(tmp_path / "dump.json")],
        capture_output=True, text=True, timeout=120, check=True,
    )
    records = [json.loads(l) for l in trace_path.read_text().splitlines()]
    tampered = []
    dropped = False
    for record in records:
        if (
            not dropped
            and record.get("dir") == "recv"
            and record["frame"]["type"] == "OBJECT_UPDATE"
        ):
            record["frame"]["payload"]["version"] = 0
            dropped = True
        tampered.append(record)
    assert dropped
    trace_path.write_text("\n".join(json.dumps(r) for r in tampered))
    check = subprocess.run(
        [sys.executable, "-m", "surface_sync.cli", "check",
         "--traces", str(traces_dir), "--dump", str(tmp_path / "dump.json")],
        capture_output=True, text=True, timeout=60,
    )
    assert check.returncode == 1
    assert "version_monotonicity" in check.stdout
