"""Drives the installed `agentloop` CLI the way an operator would."""
import json
import os
import signal
import socket
import subprocess
import sys
import time
from pathlib import Path

import httpx
import pytest

REPO = Path(__file__).resolve().parent.parent
ENV = {**os.environ, "PYTHONUNBUFFERED": "1"}
ENV.pop("AGENTLOOP_TOKEN", None)


def cli(*args, timeout=60, check=True):
    proc = subprocess.run([sys.executable, "-m", "agentloop.cli", *map(str, args)],
                          capture_output=True, text=True, timeout=timeout, env=ENV)
    if check and proc.returncode != 0:
        raise AssertionError(f"agentloop {' '.join(map(str, args))} failed:\n"
                             f"{proc.stdout}\n{proc.stderr}")
    return proc


def free_port():
    s = socket.socket()
    s.bind(("127.0.0.1", 0))
    port = s.getsockname()[1]
    s.close()
    return port


class Background:
    def __init__(self, *args):
        self.proc = subprocess.Popen([sys.executable, "-m", "agentloop.cli", *map(str, args)],
                                     stdout=subprocess.PIPE, stderr=subprocess.STDOUT,
                                     text=True, env=ENV)

    def stop(self):
        self.proc.send_signal(signal.SIGINT)
        try:
            self.proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            self.proc.kill()
            self.proc.wait()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.stop()


def wait_http(url, timeout=10):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        try:
            if httpx.get(url, timeout=1).status_code == 200:
                return
        except httpx.HTTPError:
            time.sleep(0.1)
    raise AssertionError(f"{url} never came up")


def wait_port(port, timeout=10):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        try:
            socket.create_connection(("127.0.0.1", port), timeout=0.5).close()
            return
        except OSError:
            time.sleep(0.1)
    raise AssertionError(f"port {port} never opened")


class TestStatsCli:
    def test_table_and_json_over_bundled_fixture(self):
        table = cli("stats", "--log", REPO / "fixtures" / "deployment").stdout
        assert "interactions" in table and "555" in table
        as_json = cli("stats", "--log", REPO / "fixtures" / "deployment",
                      "--format", "json").stdout
        assert json.loads(as_json)["total_interactions"] == 555

    def test_unknown_format_exits_nonzero(self):
        proc = cli("stats", "--log", REPO / "fixtures" / "deployment",
                   "--format", "xml", check=False)
        assert proc.returncode == 2


class TestFixturesCli:
    def test_generate_matches_bundled(self, tmp_path):
        cli("fixtures", "generate", "--out", tmp_path / "dep")
        for name in ("interactions.jsonl", "sessions.jsonl"):
            assert (tmp_path / "dep" / name).read_bytes() == \
                (REPO / "fixtures" / "deployment" / name).read_bytes()

    def test_wav_fixture(self, tmp_path):
        cli("fixtures", "wav", "--out", tmp_path / "u.wav", "--voiced-ms", "300")
        from agentloop.adapters import read_wav
        audio = read_wav(tmp_path / "u.wav")
        assert audio.sample_rate == 16000


class TestMemoryCli:
    def test_import(self, tmp_path):
        dump = tmp_path / "history.jsonl"
        dump.write_text('{"text": "visited the pier", "created_at": 1000}\n')
        out = cli("memory", "import", dump, "--store", tmp_path / "memory.jsonl").stdout
        assert "imported 1" in out


class TestFullStackCli:
    def test_serve_session_replay_stats(self, tmp_path):
        model_port, gateway_port = free_port(), free_port()
        wav = tmp_path / "u.wav"
        cli("fixtures", "wav", "--out", wav)
        capture = tmp_path / "capture.jsonl"
        logs = tmp_path / "logs"
        script = tmp_path / "script.jsonl"
        script.write_text(json.dumps({"utterance": "add eggs to my shopping list"}) + "\n")

        with Background("serve-gateway", "--port", gateway_port,
                        "--state-dir", tmp_path / "state",
                        "--fixtures", REPO / "fixtures" / "gateway",
                        "--token", "cli-test-token"), \
             Background("serve-model", "--port", model_port, "--script", script):
            wait_http(f"http://127.0.0.1:{gateway_port}/healthz")
            wait_port(model_port)
            proc = cli("session",
                       "--endpoint", f"ws://127.0.0.1:{model_port}",
                       "--audio", wav,
                       "--gateway-url", f"http://127.0.0.1:{gateway_port}",
                       "--token", "cli-test-token",
                       "--capture", capture, "--log-dir", logs,
                       "--expect-turns", "1", "--max-run-s", "20")
            assert "turns=1" in proc.stdout
            assert "[shop]" in proc.stdout

            # Gateway state reflects the run (token-gated debug dump).
            dump = httpx.get(f"http://127.0.0.1:{gateway_port}/state/cart",
                             headers={"Authorization": "Bearer cli-test-token"},
                             timeout=5).json()
            assert len(dump["items"]) == 1

        replay = cli("replay", capture)
        assert json.loads(replay.stdout.strip())["violations"] == []

        stats = cli("stats", "--log", logs).stdout
        assert "interactions" in stats and "1" in stats


class TestSessionConfigFile:
    def test_config_json_drives_the_session(self, tmp_path):
        model_port = free_port()
        cfg = tmp_path / "session.json"
        cfg.write_text(json.dumps({
            "model_id": "live-mock-1",
            "system_prompt": "short test prompt",
            "generation_params": {"temperature": 0.2},
            "endpoint": f"ws://127.0.0.1:{model_port}",
            "reconnect_max_attempts": 2,
            "reconnect_backoff_ms": 50,
        }))
        wav = tmp_path / "u.wav"
        cli("fixtures", "wav", "--out", wav)
        with Background("serve-model", "--port", model_port):
            wait_port(model_port)
            proc = cli("session", "--config", cfg,
                       "--endpoint", f"ws://127.0.0.1:{model_port}",
                       "--audio", wav, "--expect-turns", "1", "--max-run-s", "15")
        assert "turns=1" in proc.stdout
