"""Command-line client for the chordc service.

The CLI only speaks the HTTP API.  By default it serves each request
in-process (no network, no running server needed); ``--server URL`` points
it at a remote instance instead.  Exit codes: 0 success, 1 invalid input,
2 check failure, 3 unsupported construct, 4 resource cap exceeded.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import httpx

EXIT_CODES = {
    "ok": 0,
    "invalid": 1,
    "check_failed": 2,
    "unsupported": 3,
    "cap_exceeded": 4,
}


def _make_client(server: str | None) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server, timeout=300.0)
    from fastapi.testclient import TestClient

    from .service.app import create_app

    return TestClient(create_app())


def _env_cap() -> int | None:
    raw = os.environ.get("CHORDC_CAP")
    if raw is None:
        return None
    try:
        return int(raw)
    except ValueError:
        print(f"warning: ignoring non-numeric CHORDC_CAP={raw!r}", file=sys.stderr)
        return None


def _post(client: httpx.Client, endpoint: str, payload: dict) -> dict:
    response = client.post(endpoint, json=payload)
    if response.status_code != 200:
        raise RuntimeError(f"{endpoint} answered HTTP {response.status_code}: {response.text}")
    return response.json()


def _print_problems(data: dict) -> None:
    error = data.get("error")
    if error:
        print(f"error: {error['message']}", file=sys.stderr)
    for violation in data.get("violations", ()):
        print(f"{violation['path']}: {violation['message']}")


def _finish(args, data: dict) -> int:
    if args.json:
        print(json.dumps(data, indent=2))
        return EXIT_CODES[data["status"]]
    if data["status"] != "ok":
        _print_problems(data)
    return EXIT_CODES[data["status"]]


def _read_document(path: str) -> str:
    return Path(path).read_text(encoding="utf-8")


def cmd_validate(args, client) -> int:
    data = _post(client, "/validate", {"document": _read_document(args.model)})
    if args.json:
        print(json.dumps(data, indent=2))
        return EXIT_CODES[data["status"]]
    _print_problems(data)
    for warning in data.get("warnings", ()):
        print(f"warning: {warning}")
    if data["status"] == "ok":
        print("ok")
    return EXIT_CODES[data["status"]]


def _render_set(values: list[str]) -> str:
    return "{" + ",".join(values) + "}"


def cmd_rolesets(args, client) -> int:
    payload = {"document": _read_document(args.model), "node": args.node}
    data = _post(client, "/rolesets", payload)
    if args.json or data["status"] != "ok":
        return _finish(args, data)
    rows = data["rows"]
    table = [("node", "path", "SR", "TR", "PR")] + [
        (
            row["label"],
            row["path"],
            _render_set(row["sr"]),
            _render_set(row["tr"]),
            _render_set(row["pr"]),
        )
        for row in rows
    ]
    widths = [max(len(line[col]) for line in table) for col in range(5)]
    for line in table:
        print("  ".join(cell.ljust(width) for cell, width in zip(line, widths)).rstrip())
    for warning in data.get("warnings", ()):
        print(f"warning: {warning}")
    return 0


def cmd_derive(args, client) -> int:
    payload = {
        "document": _read_document(args.model),
        "roles": None if args.all else [args.role],
        "flatten": args.flatten,
        "format": args.format,
        "inject": args.inject,
    }
    data = _post(client, "/derive", payload)
    if args.json or data["status"] != "ok":
        return _finish(args, data)
    machines = data["machines"]
    if not args.all and args.output is None:
        print(machines[0]["content"], end="")
        return 0
    if not args.all:
        Path(args.output).write_text(machines[0]["content"], encoding="utf-8")
        print(f"wrote {args.output}")
        return 0
    outdir = Path(args.output or ".")
    outdir.mkdir(parents=True, exist_ok=True)
    for machine in machines:
        target = outdir / machine["filename"]
        target.write_text(machine["content"], encoding="utf-8")
        print(f"wrote {target}")
    return 0


def cmd_check(args, client) -> int:
    cap = args.cap if args.cap is not None else _env_cap()
    payload = {
        "document": _read_document(args.model),
        "loop_bound": args.loop_bound,
        "cap": cap,
        "inject": args.inject,
    }
    data = _post(client, "/check", payload)
    if args.json or data["status"] not in ("ok", "check_failed"):
        return _finish(args, data)
    print(f"equivalent: {'yes' if data['equivalent'] else 'no'}")
    print(f"oracle traces: {data['oracle_count']}")
    print(f"system traces: {data['system_count']}")
    for kind in ("missing_traces", "extra_traces"):
        for trace in data[kind]:
            print(f"  {kind.replace('_', ' ')[:-1]}: {trace}")
    print(f"deadlocks: {len(data['deadlocks'])}")
    for deadlock in data["deadlocks"]:
        picks = ", ".join(f"{path}={'left' if b == 0 else 'right'}"
                          for path, b in sorted(deadlock["resolution"].items()))
        print(f"  deadlock under [{picks}]")
        for blocked in deadlock["blocked"]:
            print(f"    {blocked['role']}@{blocked['state']}: {blocked['action']}")
    print(f"complementarity: {'ok' if data['complementarity_ok'] else 'violated'}")
    for problem in data["complementarity_problems"]:
        print(f"  {problem}")
    print(f"coordination: flowm={data['flowm_sends']} choicem={data['choicem_sends']}")
    if data["strict_barrier_diagnostics"]:
        print("strict-barrier diagnostics:")
        for diag in data["strict_barrier_diagnostics"]:
            print(f"  {diag['path']}: {diag['witness']}")
    return EXIT_CODES[data["status"]]


def cmd_trace(args, client) -> int:
    payload = {
        "document": _read_document(args.model),
        "side": "oracle" if args.oracle else "system",
        "loop_bound": args.loop_bound,
        "cap": _env_cap(),
    }
    data = _post(client, "/trace", payload)
    if args.json or data["status"] != "ok":
        return _finish(args, data)
    for trace in data["traces"]:
        print(trace)
    return 0


def cmd_serve(args, client) -> int:
    del client
    import uvicorn

    from .service.app import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chordc",
        description="Derive per-role state machines from a choreography model "
        "and check that their composition realizes it.",
    )
    parser.add_argument("--server", help="URL of a running chordc service (default: in-process)")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("model", help="model document (JSON)")
        p.add_argument("--json", action="store_true", help="machine-readable output")

    p = sub.add_parser("validate", help="check model well-formedness")
    common(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("rolesets", help="print SR/TR/PR per term node")
    common(p)
    p.add_argument("--node", help="restrict to one node (path or label)")
    p.set_defaults(func=cmd_rolesets)

    p = sub.add_parser("derive", help="derive per-role state machines")
    common(p)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--role", help="derive a single role")
    group.add_argument("--all", action="store_true", help="derive every declared role")
    p.add_argument("-o", "--output", help="output file (single role) or directory (--all)")
    p.add_argument("--flatten", action="store_true", help="inline composite states")
    p.add_argument("--format", choices=("json", "dot"), default="json")
    p.add_argument("--inject", action="append", default=[], choices=("drop-choicem", "drop-flowm"),
                   help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_derive)

    p = sub.add_parser("check", help="check realizability of the derived machines")
    common(p)
    p.add_argument("--loop-bound", type=int, default=0)
    p.add_argument("--cap", type=int, help="exploration cap (default CHORDC_CAP or 10^6)")
    p.add_argument("--inject", action="append", default=[], choices=("drop-choicem", "drop-flowm"),
                   help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("trace", help="enumerate intended or realized traces")
    common(p)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--oracle", action="store_true", help="intended traces")
    group.add_argument("--system", action="store_true", help="traces of the composed machines")
    p.add_argument("--loop-bound", type=int, default=1)
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve, json=False)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "serve":
        return cmd_serve(args, None)
    client = _make_client(args.server)
    try:
        return args.func(args, client)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (httpx.HTTPError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    finally:
        client.close()


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
