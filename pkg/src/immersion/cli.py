"""Command line: ``immersion {catalog,geom,spectrum,anomaly,verify}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

from . import catalog as cat
from .cache import EigenCache
from .config import RunConfig, load_config, make_config
from .errors import ConfigError
from .pipeline import STAGES, run_pipeline

log = logging.getLogger("immersion")

VERB_STAGES = {"geom": STAGES[:1], "spectrum": STAGES[:3], "anomaly": STAGES,
               "verify": STAGES}


def _add_run_flags(p: argparse.ArgumentParser, surface_default=None):
    p.add_argument("--surface", default=surface_default,
                   help="catalog entry (see `immersion catalog`)")
    p.add_argument("--n", type=int, help="geometry grid size")
    p.add_argument("--spectrum-n", type=int, dest="spectrum_n",
                   help="grid size for the dense eigen-solve (<= 32)")
    p.add_argument("--mu2", type=float, help="regulator mu^2 (default: catalog value or floor+1)")
    p.add_argument("--out", help="output directory (default: out)")
    p.add_argument("--no-cache", action="store_true", help="skip the eigen-data cache")
    p.add_argument("--orientation", type=int, choices=(1, -1))
    p.add_argument("--bc", choices=("periodic", "antiperiodic"),
                   help="spinor boundary condition on both axes")
    p.add_argument("--config", help="JSON run configuration; flags override it")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="immersion", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="verb", required=True)
    sub.add_parser("catalog", help="list the built-in surfaces")
    for verb, text in (("geom", "curvatures and functionals"),
                       ("spectrum", "Dirac spectrum, heat trace and zeta values"),
                       ("anomaly", "full pipeline through the integrated identity"),
                       ("verify", "invariant suite; all catalog surfaces unless --surface")):
        _add_run_flags(sub.add_parser(verb, help=text), None)
    return ap


def config_from_args(args, surface: str | None = None) -> RunConfig:
    overrides = dict(surface=surface or args.surface, n=args.n, spectrum_n=args.spectrum_n,
                     mu2=args.mu2, out=args.out, orientation=args.orientation, bc=args.bc)
    if args.no_cache:
        overrides["cache"] = False
    if args.config:
        cfg = load_config(args.config, **overrides)
    else:
        if overrides["surface"] is None:
            overrides["surface"] = "flat"
        cfg = make_config(None, **overrides)
    cat.get_entry(cfg.surface)
    return cfg


def _print_checks(report: dict, out=sys.stdout):
    for c in report["checks"]:
        mark = "PASS" if c["passed"] else ("info" if c.get("informational") else "FAIL")
        val = "-" if c["value"] is None else f"{c['value']:.3e}"
        thr = "" if c["threshold"] is None else f" (<= {c['threshold']:.1e})"
        print(f"  {mark}  {report['surface']:<14} {c['name']:<42} {val}{thr}", file=out)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.verb == "catalog":
        for e in cat.catalog():
            print(json.dumps(e.as_dict(), default=float))
        return 0
    try:
        if args.verb == "verify" and args.surface is None and args.config is None:
            surfaces = [e.name for e in cat.catalog()]
        else:
            surfaces = [None]
        configs = [config_from_args(args, s) for s in surfaces]
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    status = 0
    for cfg in configs:
        store = EigenCache(enabled=cfg.cache)
        log.info("running %s on %s", args.verb, cfg.surface)
        result = run_pipeline(cfg, store, VERB_STAGES[args.verb])
        rep = result.report
        print(f"{rep['surface']}: {rep['status']}"
              + (f" (failed at {rep['failed_at']}: {rep['error']})" if rep["failed_at"] else "")
              + (" [eigen-data from cache]" if result.cache_hit else ""))
        _print_checks(rep)
        for path in result.paths:
            log.info("wrote %s", path)
        if not result.ok:
            status = 1
    return status


if __name__ == "__main__":
    sys.exit(main())
