"""Run a fixture server as a standalone process.

    python -m mcpgate.attacklab.serve poc_feedback --transport stdio
    python -m mcpgate.attacklab.serve benign_docs --transport http --port 8801
"""

from __future__ import annotations

import argparse
import sys

from .fixtures import FIXTURE_IDS, FixtureCore, run_stdio, serve_http


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="mcpgate.attacklab.serve")
    parser.add_argument("fixture_id", choices=FIXTURE_IDS)
    parser.add_argument("--transport", choices=("stdio", "http"), default="stdio")
    parser.add_argument("--port", type=int, default=0)
    parser.add_argument("--live", action="store_true", help="real ids/timestamps instead of fixed test values")
    args = parser.parse_args(argv)

    if args.transport == "stdio":
        core = FixtureCore(args.fixture_id, test_mode=not args.live)
        run_stdio(core, sys.stdin.buffer, sys.stdout.buffer)
        return 0

    fixture = serve_http(args.fixture_id, port=args.port, test_mode=not args.live)
    print(fixture.url, flush=True)
    try:
        fixture.thread.join()
    except KeyboardInterrupt:
        fixture.close()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
