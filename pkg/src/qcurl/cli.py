"""Command line entry point: ``qcurl <experiment> [--config FILE] [--key value]...``.

Exit codes: 0 success, 2 bad configuration or usage, 1 failure while running.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .experiments import EXPERIMENTS, ConfigError, parse_config, resolve_threads, run_experiment

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def _parse_overrides(tokens: list[str]) -> dict[str, str]:
    """``--key value`` or ``--key=value`` pairs; keys are config file keys."""
    out: dict[str, str] = {}
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if not tok.startswith("--") or tok == "--":
            raise ConfigError(f"unexpected argument {tok!r}")
        key, eq, value = tok[2:].partition("=")
        if not eq:
            if i + 1 >= len(tokens):
                raise ConfigError(f"missing value for --{key}")
            value = tokens[i + 1]
            i += 1
        out[key.replace("-", "_")] = value
        i += 1
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="qcurl",
        description="Run a curriculum-learning experiment and write raw.csv, "
        "aggregate.csv and manifest.txt.",
        epilog="Any config key can be given as --key value, e.g. --trials 5 --noise_p 0.3.",
    )
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--threads", type=int, help="worker threads (default: QCURL_THREADS or all cores)")
    p.add_argument("-q", "--quiet", action="store_true")
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args, rest = parser.parse_known_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO, format="qcurl: %(message)s"
    )
    log = logging.getLogger("qcurl")
    try:
        overrides = _parse_overrides(rest)
        if args.threads is not None:
            overrides["threads"] = str(args.threads)
        cfg = parse_config(args.experiment, args.config, overrides)
        threads = resolve_threads(cfg)
    except ConfigError as exc:
        print(f"qcurl: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    log.info("running %s: %d trial(s) on %d thread(s)", cfg.experiment, cfg.trials, threads)
    try:
        out = run_experiment(cfg, threads)
    except Exception as exc:  # report any component failure as a nonzero exit
        print(f"qcurl: {cfg.experiment} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    log.info("wrote %s", out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
