"""Command line: ``zonalmc evaluate`` and ``zonalmc compare``.

Exit status is 0 when every division clears, 2 when any division is
infeasible and 1 on configuration or input errors.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .evaluate import EvalConfig, EvaluationError, compare_divisions, evaluate_division, money

log = logging.getLogger("zonalmc")


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON file mirroring EvalConfig; command-line options override it")
    p.add_argument("--case", help="MATPOWER .m or native .json case")
    p.add_argument("--wind", help="CSV bus_id,mw of zero-price wind infeed")
    p.add_argument("--demand-price", type=float, help="common price of demand bids (default 2000)")
    p.add_argument("--slack", type=int, help="slack bus id (default: first bus of the case)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--dump-matrices", action="store_true", help="also write PTDF, GSK and offer CSVs")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="zonalmc", description="Flow-based market coupling evaluation of zonal divisions")
    sub = ap.add_subparsers(dest="command", required=True)
    ev = sub.add_parser("evaluate", help="clear and settle one division")
    _common(ev)
    ev.add_argument("--division", help="CSV bus_id,zone")
    cmp_ = sub.add_parser("compare", help="compare divisions against the single-zone market")
    _common(cmp_)
    cmp_.add_argument("--division", nargs="+", action="extend", help="one or more CSV bus_id,zone files")
    cmp_.add_argument("--jobs", type=int, help="divisions evaluated concurrently")
    return ap


def make_config(args) -> EvalConfig:
    doc: dict = {}
    if args.config:
        base = EvalConfig.from_file(args.config)
        doc = {k: getattr(base, k) for k in base.__dataclass_fields__}
    overrides = {
        "case_path": args.case,
        "wind_path": args.wind,
        "demand_price": args.demand_price,
        "slack_bus": args.slack,
        "output_dir": args.out,
        "jobs": getattr(args, "jobs", None),
    }
    doc.update({k: v for k, v in overrides.items() if v is not None})
    if args.dump_matrices:
        doc["dump_matrices"] = True
    if args.division:
        doc["division_paths"] = [args.division] if isinstance(args.division, str) else list(args.division)
    if not doc.get("case_path"):
        raise ValueError("--case (or case_path in --config) is required")
    if not doc.get("division_paths"):
        raise ValueError("--division (or division_paths in --config) is required")
    if not doc.get("output_dir"):
        raise ValueError("--out (or output_dir in --config) is required")
    return EvalConfig(**doc)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = make_config(args)
        if args.command == "evaluate":
            if len(cfg.division_paths) != 1:
                raise ValueError("evaluate takes exactly one division")
            rep = evaluate_division(cfg, cfg.division_paths[0])
            if rep.status != "optimal":
                print(f"{rep.division}: infeasible ({rep.reason})")
                return 2
            print(f"{rep.division}: sw={money(rep.sw)} rent={money(rep.congestion_rent)} "
                  f"redispatch={money(rep.redispatch_cost)} sw_corr={money(rep.sw_corrected)}")
            return 0
        table = compare_divisions(cfg)
        for r in table.rows:
            if r.infeasible:
                print(f"{r.division}: infeasible")
            else:
                print(f"{r.division} ({r.zones} zones): d_sw={money(r.d_sw)} d_redispatch={money(r.d_redispatch)} "
                      f"d_sw_corr={money(r.d_sw_corrected)}")
        return 2 if any(r.infeasible for r in table.rows) else 0
    except (EvaluationError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
