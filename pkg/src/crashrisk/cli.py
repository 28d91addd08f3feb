"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 data error,
4 numeric or estimation error, 1 anything else. Failures print one JSON
line on stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .config import build_config, default_config, dump_config, load_config
from .errors import ConfigError, CrashRiskError, DataError, NumericError

EXIT_OK, EXIT_OTHER, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3, 4


def _exit_code(exc):
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, DataError):
        return EXIT_DATA
    if isinstance(exc, NumericError):
        return EXIT_NUMERIC
    if isinstance(exc, CrashRiskError):
        return EXIT_OTHER
    if isinstance(exc, (FileNotFoundError, PermissionError)):
        return EXIT_DATA
    return EXIT_OTHER


def _parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file (see init-config)")
    common.add_argument("--seed", type=int, help="global seed, overrides the config")
    common.add_argument("--out", help="output directory, overrides the config")
    common.add_argument("--threads", type=int, help="worker threads; never changes results")
    common.add_argument("--verbose", "-v", action="count", default=0)

    p = argparse.ArgumentParser(prog="crashrisk", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"crashrisk {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    init = sub.add_parser("init-config", parents=[common], help="write a config with every default")
    init.add_argument("path", nargs="?", help="destination (stdout when omitted)")
    sim = sub.add_parser("simulate", parents=[common], help="generate a synthetic dataset")
    sim.add_argument("--sim-config", help="JSON file with simulation settings")
    for name, text in (("ingest", "load and clean inputs"),
                       ("residuals", "fit the expanded market model"),
                       ("measures", "compute crash measures"),
                       ("sentiment", "build the sentiment index"),
                       ("regress", "estimate the model suites"),
                       ("pipeline", "run every stage")):
        sub.add_parser(name, parents=[common], help=text)
    return p


def _pipeline_config(args):
    cfg = load_config(args.config) if args.config else build_config()
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.out:
        cfg["output_dir"] = args.out
    if args.threads is not None:
        cfg["threads"] = args.threads
    # re-validate after overrides
    return build_config(cfg)


def _simulate(args):
    from .simlab import SimConfig, gen_panel
    data = {}
    if args.sim_config:
        try:
            data = json.loads(Path(args.sim_config).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read simulation config {args.sim_config!r}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"simulation config is not valid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("simulation config must be a JSON object")
    if args.seed is not None:
        data["seed"] = args.seed
    cfg = SimConfig.from_dict(data)
    paths = gen_panel(cfg, args.out or "sim")
    return {k: str(v) for k, v in paths.items()}


def run(argv=None):
    args = _parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)

    if args.command == "init-config":
        text = dump_config(default_config())
        if args.path:
            Path(args.path).write_text(text, encoding="utf-8")
        else:
            sys.stdout.write(text)
        return {}
    if args.command == "simulate":
        return _simulate(args)

    from . import pipeline
    cfg = _pipeline_config(args)
    os.makedirs(cfg["output_dir"], exist_ok=True)
    if args.command == "pipeline":
        return pipeline.run_pipeline(cfg)
    return pipeline.STAGE_FUNCS[args.command](cfg)


def main(argv=None):
    try:
        summary = run(argv)
    except (CrashRiskError, OSError, ValueError, KeyError) as exc:
        return _report(exc)
    if summary:
        logging.getLogger("crashrisk").info("summary: %s", json.dumps(summary, sort_keys=True))
    return EXIT_OK


def _report(exc):
    code = _exit_code(exc)
    msg = str(exc)
    if isinstance(exc, OSError) and exc.filename:
        msg = f"{exc.strerror}: {exc.filename!r}"
    sys.stderr.write(json.dumps({"error": type(exc).__name__, "exit_code": code, "message": msg}) + "\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
