"""Command line entry point: ``vortexlab <command> --config FILE --out DIR``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import traceback

from . import __version__, harness
from ._kernels import set_threads
from .errors import ValidationError

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3
EXIT_PARTIAL = 4

COMMANDS = ("simulate", "pvs", "rearrange", "stability-check", "scaling-study")

log = logging.getLogger("vortexlab")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vortexlab", description="Vortex patch simulations and rearrangement tools.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="JSON configuration file")
    p.add_argument("--out", required=True, help="output directory (created if missing)")
    p.add_argument("--threads", type=int, default=None, help="worker threads for the N-body kernels")
    p.add_argument("--seed", type=int, default=None, help="seed override for randomized inputs")
    p.add_argument("--no-figures", action="store_true", help="skip PNG figures")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _apply_seed(cfg: dict, seed: int | None) -> dict:
    if seed is None:
        return cfg
    cfg = dict(cfg)
    cfg["seed"] = seed
    dens = cfg.get("density")
    if isinstance(dens, dict) and "family" in dens:
        cfg["density"] = {**dens, "seed": seed}
    return cfg


def dispatch(command: str, cfg: dict, out: str, figures: bool) -> int:
    if command == "simulate":
        s = harness.run_simulation(cfg, out, figures, progress=log.debug)
        log.info("simulation finished: t=%s, %s steps", s["t_final"], s["steps"])
        return EXIT_OK
    if command == "pvs":
        s = harness.run_pvs(cfg, out, figures)
        if s["stop_reason"]:
            log.warning("point vortex run stopped early: %s", s["stop_reason"])
        return EXIT_OK
    if command == "rearrange":
        s = harness.run_rearrange(cfg, out, figures)
        log.info("defect %.6g (quadrature bound %.3g)", s["defect"], s["quadrature_error_bound"])
        return EXIT_OK
    if command == "stability-check":
        r = harness.stability_batch(cfg, out, figures)
        log.info("constants %s", json.dumps(r.constants))
        return EXIT_OK
    if command == "scaling-study":
        r = harness.scaling_study(cfg, out, figures, progress=log.info)
        if r.failures:
            log.error("%d sweep member(s) failed", len(r.failures))
            return EXIT_PARTIAL
        return EXIT_OK
    raise AssertionError(command)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    log.setLevel(logging.DEBUG if args.verbose else logging.INFO)
    set_threads(args.threads)
    try:
        cfg = _apply_seed(harness.load_config(args.config), args.seed)
        return dispatch(args.command, cfg, args.out, not args.no_figures)
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        for v in getattr(exc, "violations", []):
            print(f"  {v}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001  (anything else is a runtime failure)
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        if args.verbose:
            traceback.print_exc()
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
