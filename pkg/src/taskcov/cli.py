"""Command-line client for the training service.

``run`` and ``validate`` talk to the HTTP service: by default an
in-process instance (no server needed), or a remote one via --server.
Artifacts are always written where the CLI runs.  ``gen-synthetic``
resolves its recipe through the service, then materializes the dataset
locally so multi-megabyte problems never cross the wire.

Exit codes: 0 success, 1 bad configuration, 2 training failure,
3 I/O or connection trouble.
"""

from __future__ import annotations

import argparse
import asyncio
import sys

import httpx

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_TRAINING = 2
EXIT_IO = 3


class _ServiceError(Exception):
    def __init__(self, exit_code: int, message: str):
        super().__init__(message)
        self.exit_code = exit_code


def _request(server: str | None, method: str, path: str, body: dict | None = None):
    """POST/GET against the remote server or the in-process app."""
    try:
        if server:
            with httpx.Client(base_url=server.rstrip("/"), timeout=None) as client:
                resp = client.request(method, path, json=body)
        else:
            from .service import app

            async def _call():
                transport = httpx.ASGITransport(app=app)
                async with httpx.AsyncClient(transport=transport,
                                             base_url="http://service",
                                             timeout=None) as client:
                    return await client.request(method, path, json=body)

            resp = asyncio.run(_call())
    except httpx.HTTPError as e:
        raise _ServiceError(EXIT_IO, f"cannot reach service: {e}")
    if resp.status_code == 200:
        return resp.json()
    try:
        detail = resp.json().get("detail", resp.text)
    except ValueError:
        detail = resp.text
    if resp.status_code == 422:
        raise _ServiceError(EXIT_CONFIG, f"rejected: {detail}")
    if resp.status_code == 404:
        raise _ServiceError(EXIT_IO, f"not found: {detail}")
    raise _ServiceError(EXIT_TRAINING, f"service error {resp.status_code}: {detail}")


def _load_run_config(args) -> dict:
    from .experiment import read_config_file, apply_overrides

    raw = read_config_file(args.config)
    raw = apply_overrides(raw, args.override or [])
    if args.out_dir:
        raw["out_dir"] = args.out_dir
    if args.splits is not None:
        raw["splits"] = str(args.splits)
    return raw


def cmd_run(args) -> int:
    from .core import ConfigError
    from .experiment import write_artifacts

    try:
        raw = _load_run_config(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    payload = _request(args.server, "POST", "/experiments/run", raw)
    out_dir = payload["config"]["out_dir"]
    try:
        files = write_artifacts(payload, out_dir, svg=args.svg)
    except OSError as e:
        print(f"error writing artifacts: {e}", file=sys.stderr)
        return EXIT_IO
    print(f"mode={payload['config']['mode']} dataset={payload['config']['dataset']} "
          f"loss={payload['loss']}")
    print(f"final gap {payload['final_gap']:.6g} after {payload['comm_rounds']} "
          f"communication rounds ({len(payload['trace'])} trace rows)")
    for name, stats in sorted(payload["eval_summary"].items()):
        print(f"{name}: {stats['mean']:.6g} +/- {stats['std']:.6g} "
              f"over {len(payload['evals'])} split(s)")
    for f in files:
        print(f"wrote {f}")
    return EXIT_OK


def cmd_gen_synthetic(args) -> int:
    from .data import SyntheticSpec, gen_synthetic, write_problem, DENSE, SPARSE
    from .experiment import _write_matrix

    body = {"preset": args.preset, "seed": args.seed}
    plan = _request(args.server, "POST", "/synthetic/plan", body)
    spec = SyntheticSpec.from_payload(plan["spec"])
    loss = args.loss or plan["default_loss"]
    train, test, w_true = gen_synthetic(spec, lam=args.lam, loss=loss)
    fmt = DENSE if args.format == "dense" else SPARSE
    try:
        manifest = write_problem(train, args.out_dir, fmt)
        write_problem(test, args.out_dir + "-test", fmt)
        truth_path = f"{args.out_dir}-truth.csv"
        _write_matrix(truth_path, w_true)
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    print(f"wrote {manifest} ({train.m} tasks, d={train.d}, loss={loss})")
    print(f"wrote {args.out_dir}-test and {truth_path}")
    return EXIT_OK


def cmd_validate(args) -> int:
    from .core import ConfigError
    from .experiment import read_config_file, apply_overrides

    try:
        raw = read_config_file(args.config)
        raw = apply_overrides(raw, args.override or [])
    except ConfigError as e:
        print(f"invalid: {e}", file=sys.stderr)
        return EXIT_CONFIG
    body = {"config": raw, "check_dataset": args.check_dataset}
    resp = _request(args.server, "POST", "/config/validate", body)
    if resp["valid"]:
        print("config ok")
        for key, val in sorted(resp["resolved"].items()):
            print(f"  {key} = {val}")
        return EXIT_OK
    for err in resp["errors"]:
        print(f"invalid: {err}", file=sys.stderr)
    return EXIT_CONFIG


def cmd_serve(args) -> int:
    import uvicorn
    from .service import app

    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="taskcov",
                                     description="multi-task training engine client")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment and write artifacts")
    p.add_argument("--config", required=True, help="key = value config file")
    p.add_argument("--override", action="append", metavar="KEY=VALUE",
                   help="override a config key (repeatable)")
    p.add_argument("--out-dir", help="artifact directory (overrides config)")
    p.add_argument("--splits", type=int, help="repeat over N random splits")
    p.add_argument("--svg", action="store_true", help="also write gap charts")
    p.add_argument("--server", help="remote service URL (default: in-process)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("gen-synthetic", help="materialize a synthetic dataset")
    p.add_argument("--preset", required=True, help="preset name (see /presets)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--format", choices=("dense", "sparse"), default="dense")
    p.add_argument("--loss", choices=("hinge", "squared"),
                   help="override the preset's natural loss")
    p.add_argument("--lam", type=float, default=1e-2,
                   help="lambda stamped on the problem files' manifest pairing")
    p.add_argument("--server", help="remote service URL (default: in-process)")
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("validate", help="check a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--override", action="append", metavar="KEY=VALUE")
    p.add_argument("--check-dataset", action="store_true",
                   help="also load directory datasets")
    p.add_argument("--server", help="remote service URL (default: in-process)")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8321)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: list | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _ServiceError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
