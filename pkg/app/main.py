"""
Command-line entry point.

    python -m app.main run scenarios/krein_1d.json --output-dir out/krein_1d
    python -m app.main list-catalog [--json]

Exit codes: 0 all checks passed, 1 a check failed, 2 the scenario could not be loaded.
"""
import argparse
import json
import logging
import sys

from app.core.catalog import CATALOG
from app.core.config import settings
from app.services.runner import run_scenario

logger = logging.getLogger(__name__)


def list_catalog(as_json: bool = False) -> str:
    entries = sorted(CATALOG.values(), key=lambda e: (e.kind, e.name))
    if as_json:
        payload = [
            {"name": e.name, "kind": e.kind, "description": e.description, "parameters": list(e.parameters)}
            for e in entries
        ]
        return json.dumps(payload, indent=2)
    lines = []
    for e in entries:
        lines.append(f"{e.name:<14} {e.kind:<9} {e.description}")
        lines.append(f"{'':<24} parameters: {', '.join(e.parameters)}")
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="app.main", description="Operator calculus lab: run scenario checks.")
    parser.add_argument("--log-level", default=settings.LOG_LEVEL, help="Logging level (default: %(default)s)")
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="Run a scenario file")
    run.add_argument("scenario", help="Path to a JSON scenario")
    run.add_argument("--output-dir", default=settings.OUTPUT_DIR, help="Directory for reports and CSV artifacts")
    run.add_argument("--format", choices=("json", "csv"), default="json", help="Report format")
    run.add_argument("--parallel", type=int, default=1, help="Worker threads for independent checks")

    listing = commands.add_parser("list-catalog", help="List built-in functions and tuple generators")
    listing.add_argument("--json", action="store_true", help="Machine-readable output")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=args.log_level.upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    if args.command == "list-catalog":
        print(list_catalog(args.json))
        return 0
    _, code = run_scenario(args.scenario, args.output_dir, args.format, args.parallel)
    return code


if __name__ == "__main__":
    sys.exit(main())
