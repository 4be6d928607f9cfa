"""Command-line client for the experiment service.

By default requests go to the service in-process; ``--server URL`` sends them
over HTTP to a running ``rhcsub serve`` instead. Exit codes: 0 success,
2 config error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from pydantic import TypeAdapter, ValidationError

from .harness import schemas as S
from .harness.emit import emit, render

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

_result_adapter = TypeAdapter(S.ExperimentResult)


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rhcsub", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in S.CONFIG_TYPES:
        p = sub.add_parser(kind, help=f"run a {kind} experiment")
        p.add_argument("--config", type=Path, help="JSON experiment config")
        p.add_argument("--seed", type=int, help="master seed (u64), overrides the config")
        p.add_argument("--out", type=Path, help="output file (default: stdout)")
        p.add_argument("--format", choices=["csv", "json"], help="output format")
        p.add_argument("--jobs", type=int, help="worker processes")
        p.add_argument("--server", help="base URL of a running service")
    serve = sub.add_parser("serve", help="run the HTTP service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    return parser


def _load_json(path: Path, field: str):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise CliError(EXIT_CONFIG, f"{field}: cannot read {path}: {exc.strerror or exc}") from None
    except json.JSONDecodeError as exc:
        raise CliError(EXIT_CONFIG, f"{field}: {path} is not valid JSON ({exc.msg} at line {exc.lineno})") from None


def load_config(kind: str, args) -> dict:
    data = {} if args.config is None else _load_json(args.config, "--config")
    if not isinstance(data, dict):
        raise CliError(EXIT_CONFIG, "<root>: config must be a JSON object")
    if data.setdefault("kind", kind) != kind:
        raise CliError(EXIT_CONFIG, f"kind: config is for {data['kind']!r}, command is {kind!r}")
    base = args.config.parent if args.config is not None else Path(".")
    # system specs may be given as a path to a JSON file
    for key in ("system", "nominal"):
        if isinstance(data.get(key), str):
            data[key] = _load_json(base / data[key], key)
    if args.seed is not None:
        data["seed"] = args.seed
    if args.jobs is not None:
        data["jobs"] = args.jobs
    output = dict(data.get("output") or {})
    if args.out is not None:
        output["path"] = str(args.out)
    if args.format is not None:
        output["format"] = args.format
    if output:
        data["output"] = output
    if kind == "adaptive" and output.get("format") == "csv":
        data.setdefault("include_steps", True)
    return data


def validate(kind: str, data: dict):
    try:
        return S.CONFIG_TYPES[kind].model_validate(data)
    except ValidationError as exc:
        from .service import validation_message

        raise CliError(EXIT_CONFIG, validation_message(exc.errors())) from None


def _client(server: str | None):
    if server:
        import httpx

        return httpx.Client(base_url=server, timeout=None)
    import warnings

    from .service import app

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        from fastapi.testclient import TestClient

    return TestClient(app, raise_server_exceptions=False)


def request(kind: str, cfg, server: str | None = None):
    """Send ``cfg`` to the service and return the parsed result model."""
    with _client(server) as client:
        try:
            resp = client.post(f"/v1/{kind}", json=cfg.model_dump(mode="json"))
        except Exception as exc:  # connection problems with --server
            raise CliError(EXIT_CONFIG, f"--server: cannot reach {server}: {exc}") from None
    if resp.status_code == 200:
        return _result_adapter.validate_python(resp.json())
    try:
        body = resp.json()
    except ValueError:
        body = {"message": resp.text}
    code = EXIT_CONFIG if resp.status_code == 422 else EXIT_NUMERICAL
    raise CliError(code, body.get("message") or str(body))


def run_command(kind: str, args) -> int:
    cfg = validate(kind, load_config(kind, args))
    result = request(kind, cfg, args.server)
    if cfg.output.path is None:
        sys.stdout.write(render(result, cfg.output.format))
        return EXIT_OK
    try:
        emit(result, cfg.output.path, cfg.output.format)
    except OSError as exc:
        raise CliError(EXIT_CONFIG, f"output.path: {exc}") from None
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "serve":
        import uvicorn

        from .service import app

        uvicorn.run(app, host=args.host, port=args.port)
        return EXIT_OK
    try:
        return run_command(args.command, args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
