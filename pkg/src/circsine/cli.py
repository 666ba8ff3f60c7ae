"""Command-line entry point: ``circsine <command> [--config FILE] [--set key=value ...]``.

Exit codes: 0 pass, 1 usage error, 2 numerical failure, 3 acceptance failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import io
from .config import ExperimentConfig, apply_override
from .experiments import COMMANDS, DEFAULTS, Report, UsageError

EXIT_PASS, EXIT_USAGE, EXIT_NUMERICAL, EXIT_ACCEPTANCE = 0, 1, 2, 3

log = logging.getLogger("circsine")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="circsine", description="Coupled circular-beta / Sine-beta operator experiments.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", type=Path, help="JSON config file or a saved manifest.json")
        s.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override one config key (value parsed as JSON when possible)")
        s.add_argument("--outdir", help=f"output directory (env {io.OUTDIR_ENV} takes precedence)")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def load_config(command: str, path: Path | None, overrides: list[str], outdir: str | None) -> ExperimentConfig:
    data = ExperimentConfig(experiment=command).to_dict()
    data.update(DEFAULTS[command])
    if path is not None:
        user = json.loads(Path(path).read_text())
        if not isinstance(user, dict):
            raise UsageError("config file must hold a JSON object")
        if "config_hash" in user and isinstance(user.get("config"), dict):
            # a saved run manifest: replay its config snapshot
            user = user["config"]
        data.update(user)
    for ov in overrides:
        apply_override(data, ov)
    if outdir is not None:
        data["outdir"] = outdir
    data["experiment"] = command
    cfg = ExperimentConfig.from_dict(data)
    cfg.validate()
    return cfg


def write_report(report: Report, cfg: ExperimentConfig, manifest: io.RunManifest) -> Path:
    out = io.resolve_outdir(cfg.outdir) / report.command
    for name, table in report.tables.items():
        manifest.add_output(io.write_csv(out / f"{name}.csv", table.columns, table.rows))
    checks = [{"criterion": c.criterion, "name": c.name, "passed": c.passed, "hard": c.hard, "detail": c.detail}
              for c in report.checks]
    manifest.add_output(io.write_csv(out / "checks.csv", ["criterion", "name", "passed", "hard", "detail"], checks))
    for name, svg in report.figures.items():
        manifest.add_output(svg.save(out / f"{name}.svg"))
    manifest.checks = checks
    manifest.replicas = report.replicas
    return out


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = load_config(args.command, args.config, args.overrides, args.outdir)
    except (ValueError, TypeError, OSError, json.JSONDecodeError) as exc:
        print(f"circsine: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    manifest = io.RunManifest(args.command, cfg.to_dict(), cfg.digest())
    try:
        report = COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"circsine: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (RuntimeError, ArithmeticError) as exc:
        print(f"circsine: numerical failure: {exc}", file=sys.stderr)
        manifest.finish(EXIT_NUMERICAL)
        manifest.save(io.resolve_outdir(cfg.outdir) / args.command / "manifest.json")
        return EXIT_NUMERICAL
    out = write_report(report, cfg, manifest)
    for c in report.checks:
        print(c.line())
    code = report.exit_code()
    manifest.finish(code)
    manifest.save(out / "manifest.json")
    log.info("outputs in %s", out)
    return code


def main_exit() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
