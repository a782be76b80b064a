"""agentloop command line.

  agentloop serve-model     run the mock live-model endpoint
  agentloop serve-gateway   run the skill gateway
  agentloop session         stream media fixtures through a live session
  agentloop replay          re-drive a captured frame log offline
  agentloop stats           report usage statistics over interaction logs
  agentloop fixtures        generate bundled fixtures (deployment log, wav)
  agentloop memory          import history into the memory store
  agentloop serve           serve the operator console assets
"""
from __future__ import annotations

import argparse
import asyncio
import json
import logging
import sys
from pathlib import Path

from .control import DEFAULT_CONTROL_PORT

logger = logging.getLogger(__name__)

DEFAULT_MODEL_PORT = 18788


def _add_session(sub: argparse._SubParsersAction) -> None:
    p = sub.add_parser("session", help="run a live session against a model endpoint")
    p.add_argument("--endpoint", default=f"ws://127.0.0.1:{DEFAULT_MODEL_PORT}")
    p.add_argument("--config", type=Path, help="session config JSON")
    p.add_argument("--audio", type=Path, help="WAV file standing in for the microphone")
    p.add_argument("--frames", type=Path, help="directory of images standing in for the camera")
    p.add_argument("--audio-only", action="store_true", help="suppress all frame uplink")
    p.add_argument("--fps", type=int, default=24, help="nominal source frame rate")
    p.add_argument("--frame-interval-ms", type=int, default=1000)
    p.add_argument("--jpeg-quality", type=int, default=50)
    p.add_argument("--gateway-url", default="http://127.0.0.1:18789")
    p.add_argument("--token", default="local-dev-token",
                   help="gateway bearer token (AGENTLOOP_TOKEN overrides)")
    p.add_argument("--capture", type=Path, help="write both frame directions to this JSONL")
    p.add_argument("--log-dir", type=Path, help="write interactions.jsonl/sessions.jsonl here")
    p.add_argument("--control-port", type=int, nargs="?", const=DEFAULT_CONTROL_PORT,
                   help="expose the operator control channel")
    p.add_argument("--require-approval", action="store_true",
                   help="hold sensitive tool calls for operator approval")
    p.add_argument("--paced", action="store_true", help="upload media at capture pace")
    p.add_argument("--expect-turns", type=int, help="close after this many completed turns")
    p.add_argument("--quiet-close-s", type=float, default=1.0)
    p.add_argument("--max-run-s", type=float, default=60.0)


def _cmd_session(args: argparse.Namespace) -> int:
    from .client import RunnerOptions, SessionRunner
    from .media import MediaMode, PipelineConfig
    from .router import RouterConfig
    from .session import SessionConfig

    if args.config:
        cfg = SessionConfig.from_dict(json.loads(args.config.read_text(encoding="utf-8")))
        if args.endpoint:
            cfg.endpoint = args.endpoint
    else:
        cfg = SessionConfig(endpoint=args.endpoint)
    options = RunnerOptions(
        audio_path=args.audio, frames_dir=args.frames,
        mode=MediaMode.AUDIO_ONLY if args.audio_only else MediaMode.AUDIO_AND_VIDEO,
        pipeline_cfg=PipelineConfig(frame_interval_ms=args.frame_interval_ms,
                                    jpeg_quality=args.jpeg_quality, source_fps=args.fps),
        paced=args.paced, capture_path=args.capture, log_dir=args.log_dir,
        control_port=args.control_port, auto_approve=not args.require_approval,
        expected_turns=args.expect_turns, quiet_close_s=args.quiet_close_s,
        max_run_s=args.max_run_s)
    router_cfg = RouterConfig(gateway_url=args.gateway_url, bearer_token=args.token)
    runner = SessionRunner(cfg, router_cfg, options)
    summary = asyncio.run(runner.run())
    print(f"session {summary.session_id}: phase={summary.phase} turns={summary.turns} "
          f"chunks={summary.chunks_sent} frames={summary.frames_sent} "
          f"interactions={len(summary.interactions)}")
    for record in summary.interactions:
        latency = f"{record.latency_ms} ms" if record.latency_ms is not None else "no response"
        print(f"  [{record.category}] {record.utterance!r} -> {record.chain_depth} steps, {latency}")
    return 0 if summary.phase != "failed" else 1


def _cmd_replay(args: argparse.Namespace) -> int:
    from .client import replay_capture
    report = asyncio.run(replay_capture(args.capture))
    print(json.dumps(report, indent=2))
    return 0 if not report["violations"] else 1


def _cmd_serve_model(args: argparse.Namespace) -> int:
    from .modelsim import TurnPolicy, load_script, serve_model
    policy = TurnPolicy.from_file(args.policy) if args.policy else TurnPolicy()
    script = load_script(args.script) if args.script else ()
    print(f"mock model listening on ws://{args.host}:{args.port}")
    try:
        asyncio.run(serve_model(args.host, args.port, policy, script))
    except KeyboardInterrupt:
        pass
    return 0


def _cmd_serve_gateway(args: argparse.Namespace) -> int:
    import os

    from .gateway import GatewayApp, GatewayServer
    token = os.environ.get("AGENTLOOP_TOKEN") or args.token
    app = GatewayApp(args.state_dir, token=token, fixtures_dir=args.fixtures,
                     allow_net=args.allow_net)
    server = GatewayServer(app, host=args.host, port=args.port)
    print(f"gateway listening on {server.url} (state: {args.state_dir})")
    try:
        server.httpd.serve_forever()
    except KeyboardInterrupt:
        server.httpd.server_close()
    return 0


def _cmd_stats(args: argparse.Namespace) -> int:
    from .analytics import compute_stats_from_dir, render_report
    report = compute_stats_from_dir(args.log)
    try:
        print(render_report(report, args.format))
    except ValueError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    return 0


def _cmd_fixtures(args: argparse.Namespace) -> int:
    if args.what == "generate":
        from .analytics import generate_fixture, render_report
        report = generate_fixture(args.out)
        print(f"wrote deployment fixture to {args.out}")
        print(render_report(report))
        return 0
    if args.what == "wav":
        from .adapters import synth_voiced_wav
        path = synth_voiced_wav(args.out, voiced_ms=args.voiced_ms,
                                trailing_silence_ms=args.silence_ms,
                                sample_rate=args.rate, channels=args.channels)
        print(f"wrote {path}")
        return 0
    raise AssertionError(args.what)


def _cmd_memory(args: argparse.Namespace) -> int:
    from .memory import MemoryStore
    store = MemoryStore(args.store)
    count = store.import_jsonl(args.source)
    print(f"imported {count} entries into {args.store} ({len(store)} total)")
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    if not args.console:
        print("nothing to serve (did you mean --console?)", file=sys.stderr)
        return 2
    import functools
    from http.server import SimpleHTTPRequestHandler, ThreadingHTTPServer
    dist = Path(args.dist)
    if not dist.is_dir():
        print(f"console bundle not found at {dist}; build it with "
              f"`npm run build` in frontend/", file=sys.stderr)
        return 2
    handler = functools.partial(SimpleHTTPRequestHandler, directory=str(dist))
    httpd = ThreadingHTTPServer((args.host, args.port), handler)
    print(f"console at http://{args.host}:{args.port} (assets: {dist})")
    try:
        httpd.serve_forever()
    except KeyboardInterrupt:
        httpd.server_close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="agentloop", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    _add_session(sub)

    p = sub.add_parser("replay", help="re-drive a captured frame log through the state machine")
    p.add_argument("capture", type=Path)

    p = sub.add_parser("serve-model", help="run the deterministic mock model endpoint")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=DEFAULT_MODEL_PORT)
    p.add_argument("--policy", type=Path, help="policy rules JSON")
    p.add_argument("--script", type=Path, help="JSONL of scripted utterance transcriptions")

    p = sub.add_parser("serve-gateway", help="run the skill gateway")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=18789)
    p.add_argument("--state-dir", type=Path, required=True)
    p.add_argument("--fixtures", type=Path, help="directory with products.json/pages.json")
    p.add_argument("--token", default="local-dev-token")
    p.add_argument("--allow-net", action="store_true",
                   help="permit real web fetches from the web_lookup skill")

    p = sub.add_parser("stats", help="compute usage statistics over a log directory")
    p.add_argument("--log", type=Path, required=True)
    p.add_argument("--format", default="table", help="json or table")

    p = sub.add_parser("fixtures", help="generate bundled fixtures")
    fsub = p.add_subparsers(dest="what", required=True)
    g = fsub.add_parser("generate", help="deterministic deployment log fixture")
    g.add_argument("--out", type=Path, required=True)
    w = fsub.add_parser("wav", help="synthesized voiced-utterance WAV")
    w.add_argument("--out", type=Path, required=True)
    w.add_argument("--voiced-ms", type=int, default=1200)
    w.add_argument("--silence-ms", type=int, default=500)
    w.add_argument("--rate", type=int, default=16000)
    w.add_argument("--channels", type=int, default=1)

    p = sub.add_parser("memory", help="memory store maintenance")
    msub = p.add_subparsers(dest="what", required=True)
    imp = msub.add_parser("import", help="bulk-import a JSONL history dump")
    imp.add_argument("source", type=Path)
    imp.add_argument("--store", type=Path, required=True,
                     help="memory.jsonl under the gateway state directory")

    p = sub.add_parser("serve", help="serve static assets")
    p.add_argument("--console", action="store_true")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=18791)
    p.add_argument("--dist", type=Path, default=Path("frontend/dist"))

    return parser


HANDLERS = {
    "session": _cmd_session,
    "replay": _cmd_replay,
    "serve-model": _cmd_serve_model,
    "serve-gateway": _cmd_serve_gateway,
    "stats": _cmd_stats,
    "fixtures": _cmd_fixtures,
    "memory": _cmd_memory,
    "serve": _cmd_serve,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    return HANDLERS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
