"""Command-line entry points.

``gateway run`` starts a deployment from a config file; the remaining
subcommands are operator utilities: offline log verification, policy
linting, and an approvals client for the admin API.
"""

from __future__ import annotations

import argparse
import json
import os
import signal
import sys
import threading
import urllib.error
import urllib.request

from .gateway.app import GatewayApp
from .gateway.config import ConfigError
from .policy import PolicyConfigError, load_policy_config
from .provenance import load_export, verify_export


def _cmd_run(args) -> int:
    try:
        app = GatewayApp.from_path(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    app.start()
    # flush so the banner reaches pipes promptly (supervisors wait on it)
    print(f"gateway listening on {app.upstream.url}", flush=True)
    print(f"admin API on {app.admin.url}", flush=True)
    stop = threading.Event()
    for signame in ("SIGINT", "SIGTERM"):
        signal.signal(getattr(signal, signame), lambda *_: stop.set())
    try:
        stop.wait()
    finally:
        app.close()
    return 0


def _cmd_verify_log(args) -> int:
    try:
        with open(args.path, encoding="utf-8") as fh:
            records = load_export(fh)
    except OSError as exc:
        print(f"cannot read {args.path}: {exc}", file=sys.stderr)
        return 2
    if args.public_key:
        key = args.public_key
        if os.path.exists(key):
            with open(key, encoding="utf-8") as fh:
                key = fh.read().strip()
    elif records:
        print("no --public-key given; cannot verify signatures", file=sys.stderr)
        return 2
    else:
        key = ""
    result = verify_export(records, key, expected_head=args.expect_head or None)
    if result.ok:
        print(f"ok: {len(records)} records, chain intact")
    else:
        print(f"FAILED at seq {result.broken_at}: {result.cause}")
    return result.exit_code()


def _cmd_policy_check(args) -> int:
    try:
        with open(args.path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        print(f"cannot read {args.path}: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"not JSON: {exc}", file=sys.stderr)
        return 2
    try:
        rules, limits, actions, overrides = load_policy_config(doc)
    except PolicyConfigError as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return 2
    print(
        f"ok: {len(rules)} rule(s), {len(limits)} rate limit(s), "
        f"{len(actions)} finding action(s), {len(overrides)} override(s)"
    )
    return 0


def _admin_request(args, method: str, path: str, body=None):
    token = os.environ.get("GATEWAY_ADMIN_TOKEN", "")
    if not token:
        raise SystemExit("GATEWAY_ADMIN_TOKEN is not set")
    url = args.admin_url.rstrip("/") + path
    data = json.dumps(body).encode("utf-8") if body is not None else None
    request = urllib.request.Request(
        url,
        data=data,
        method=method,
        headers={"Authorization": f"Bearer {token}", "Content-Type": "application/json"},
    )
    try:
        with urllib.request.urlopen(request, timeout=10) as resp:
            return resp.status, json.loads(resp.read().decode("utf-8"))
    except urllib.error.HTTPError as exc:
        return exc.code, json.loads(exc.read().decode("utf-8") or "{}")


def _cmd_approvals(args) -> int:
    if args.action == "list":
        status, doc = _admin_request(args, "GET", "/approvals")
        if status != 200:
            print(f"error {status}: {doc.get('error')}", file=sys.stderr)
            return 1
        approvals = doc.get("approvals", [])
        if not approvals:
            print("no pending approvals")
            return 0
        for entry in approvals:
            tool = entry.get("tool", {})
            print(
                f"{entry['request_id']}  {entry['server_id']}.{tool.get('name', '?')}  "
                f"first seen {entry.get('first_seen', '?')}"
            )
        return 0
    status, doc = _admin_request(
        args, "POST", f"/approvals/{args.request_id}", {"verdict": args.verdict}
    )
    if status != 200:
        print(f"error {status}: {doc.get('error')}", file=sys.stderr)
        return 1
    print(f"{args.request_id} -> {doc['request']['state']}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gateway")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="start the gateway")
    run.add_argument("--config", required=True, help="path to the gateway config JSON")
    run.set_defaults(func=_cmd_run)

    verify = sub.add_parser("verify-log", help="verify an exported provenance log")
    verify.add_argument("path", help="JSONL export to verify")
    verify.add_argument("--public-key", default="", help="hex key or path to a file holding it")
    verify.add_argument(
        "--expect-head",
        default="",
        help="published head hash; requires the export to be the complete log",
    )
    verify.set_defaults(func=_cmd_verify_log)

    policy = sub.add_parser("policy", help="policy utilities")
    policy_sub = policy.add_subparsers(dest="action", required=True)
    check = policy_sub.add_parser("check", help="validate a policy file")
    check.add_argument("path")
    check.set_defaults(func=_cmd_policy_check)

    approvals = sub.add_parser("approvals", help="approval queue client")
    approvals.add_argument(
        "--admin-url", default="http://127.0.0.1:8801/v1", help="admin API base URL"
    )
    approvals_sub = approvals.add_subparsers(dest="action", required=True)
    listing = approvals_sub.add_parser("list", help="show pending requests")
    listing.set_defaults(func=_cmd_approvals)
    resolve = approvals_sub.add_parser("resolve", help="resolve one request")
    resolve.add_argument("request_id")
    resolve.add_argument("verdict", choices=["approved", "denied", "discovery_disabled"])
    resolve.set_defaults(func=_cmd_approvals)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
