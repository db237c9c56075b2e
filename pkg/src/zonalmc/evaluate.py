"""Division evaluation pipeline and comparison against the single-zone market."""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .case_io import Network, ZoneDivision, load_case, load_wind, load_zone_division, single_zone
from .dcflow import PtdfMatrix, build_gsk, build_nodal_ptdf, write_gsk_csv, write_ptdf_csv
from .market import DEFAULT_DEMAND_PRICE, InfeasibleError, OfferBook, bootstrap_run, build_offer_book, solve_coupling
from .settlement import SettlementReport, settle

log = logging.getLogger(__name__)

BASELINE = "single_zone"


class EvaluationError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class EvalConfig:
    case_path: str
    division_paths: list[str] = field(default_factory=list)
    wind_path: str | None = None
    demand_price: float = DEFAULT_DEMAND_PRICE
    slack_bus: int | None = None  # external bus id; default is the first bus
    feasibility_tol: float = 1e-6
    stationarity_tol: float = 1e-6
    output_dir: str | None = None
    jobs: int = 1
    dump_matrices: bool = False

    def __post_init__(self):
        if not self.demand_price > 0:
            raise ValueError("demand_price must be > 0")
        missing = [p for p in [self.case_path, *self.division_paths, self.wind_path] if p and not Path(p).exists()]
        if missing:
            raise FileNotFoundError(f"input file not found: {missing[0]}")

    @classmethod
    def from_file(cls, path: str | Path) -> "EvalConfig":
        doc = json.loads(Path(path).read_text())
        if isinstance(doc.get("tolerances"), dict):
            tol = doc.pop("tolerances")
            doc.setdefault("feasibility_tol", tol.get("feasibility", 1e-6))
            doc.setdefault("stationarity_tol", tol.get("stationarity", 1e-6))
        return cls(**doc)

    @property
    def tol(self) -> float:
        return min(self.feasibility_tol, self.stationarity_tol)


@dataclass
class Case:
    """Inputs shared by every division of one configuration."""

    net: Network
    book: OfferBook
    ptdf: PtdfMatrix
    slack: int

    @classmethod
    def load(cls, cfg: EvalConfig) -> "Case":
        try:
            net = load_case(cfg.case_path)
        except (OSError, ValueError) as exc:
            raise EvaluationError("parse case", exc) from exc
        try:
            wind = load_wind(Path(cfg.wind_path).read_text(), net) if cfg.wind_path else {}
            book = build_offer_book(net, wind, cfg.demand_price)
        except (OSError, ValueError) as exc:
            raise EvaluationError("offer book", exc) from exc
        if cfg.slack_bus is None:
            slack = 0
        elif cfg.slack_bus in net.index:
            slack = net.index[cfg.slack_bus]
        else:
            raise EvaluationError("ptdf", ValueError(f"slack bus {cfg.slack_bus} not in case"))
        return cls(net, book, build_nodal_ptdf(net, slack), slack)


def division_name(path) -> str:
    return Path(path).stem


def _load_division(case: Case, division) -> tuple[str, ZoneDivision]:
    if isinstance(division, ZoneDivision):
        return "division", division
    try:
        return division_name(division), load_zone_division(Path(division).read_text(), case.net)
    except (OSError, ValueError) as exc:
        raise EvaluationError("parse division", exc) from exc


def run_division(case: Case, div: ZoneDivision, name: str, cfg: EvalConfig) -> SettlementReport:
    net, book = case.net, case.book
    gsk = None
    try:
        if div.n_zones >= 2:
            stage = "bootstrap"
            inj = bootstrap_run(net, div, book, case.ptdf, cfg.tol)
            gsk = build_gsk(net, div, inj)
        stage = "coupling"
        sol = solve_coupling(net, div, book, case.ptdf, gsk, cfg.tol)
    except InfeasibleError as exc:
        log.warning("division %s infeasible: %s", name, exc)
        return SettlementReport.infeasible(name, div.zones, str(exc))
    except Exception as exc:
        raise EvaluationError(stage, exc) from exc
    try:
        report = settle(net, div, book.with_zones(div), sol, cfg.demand_price, case.slack, name)
    except Exception as exc:
        raise EvaluationError("settlement", exc) from exc
    if cfg.output_dir:
        out = Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_report(report, out)
        if cfg.dump_matrices:
            (out / f"{name}_ptdf.csv").write_text(write_ptdf_csv(case.ptdf, net))
            if gsk is not None:
                (out / f"{name}_gsk.csv").write_text(write_gsk_csv(gsk, net))
            (out / f"{name}_offers.csv").write_text(book.with_zones(div).to_csv())
    return report


def evaluate_division(cfg: EvalConfig, division, case: Case | None = None) -> SettlementReport:
    """Bootstrap, GSK, zonal clearing and settlement for one division."""
    case = case or Case.load(cfg)
    name, div = _load_division(case, division)
    return run_division(case, div, name, cfg)


@dataclass
class ComparisonRow:
    division: str
    zones: int
    d_sw: float | None
    d_redispatch: float | None
    d_sw_corrected: float | None

    @property
    def infeasible(self) -> bool:
        return self.d_sw is None


@dataclass
class ComparisonTable:
    baseline: SettlementReport
    rows: list[ComparisonRow]
    reports: list[SettlementReport] = field(default_factory=list)


def compare_divisions(cfg: EvalConfig) -> ComparisonTable:
    """Evaluate every division and report differences to the single-zone market."""
    if not cfg.division_paths:
        raise ValueError("at least one division is required")
    case = Case.load(cfg)
    baseline = run_division(case, single_zone(case.net), BASELINE, cfg)
    if baseline.status != "optimal":
        raise EvaluationError("baseline", RuntimeError("single-zone market is infeasible"))
    divisions = [_load_division(case, p) for p in cfg.division_paths]

    def work(item):
        name, div = item
        return run_division(case, div, name, cfg)

    with ThreadPoolExecutor(max_workers=max(1, cfg.jobs)) as pool:
        reports = list(pool.map(work, divisions))

    rows = []
    for (name, div), rep in zip(divisions, reports):
        if rep.status != "optimal":
            rows.append(ComparisonRow(name, div.n_zones, None, None, None))
            continue
        d_sw = rep.sw - baseline.sw
        d_rd = rep.redispatch_cost - baseline.redispatch_cost
        rows.append(ComparisonRow(name, div.n_zones, d_sw, d_rd, d_sw - d_rd))
    table = ComparisonTable(baseline, rows, reports)
    if cfg.output_dir:
        out = Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "comparison.csv").write_text(comparison_csv(table))
    return table


# -- output formats -------------------------------------------------------------

def _fixed(x: float, digits: int) -> str:
    if x is None or math.isnan(x):
        return "nan"
    text = f"{x:.{digits}f}"
    # no "-0.00" for values that round to zero
    return text[1:] if text.startswith("-") and float(text) == 0 else text


def money(x: float) -> str:
    return _fixed(x, 2)


def mw(x: float) -> str:
    return _fixed(x, 3)


def report_to_dict(rep: SettlementReport) -> dict:
    def r2(x):
        return None if math.isnan(x) else round(x, 2)

    doc = {
        "division": rep.division,
        "status": rep.status,
        "zones": list(rep.zones),
        "mcp": {z: r2(v) for z, v in rep.mcp.items()},
        "sw": r2(rep.sw),
        "congestion_rent": r2(rep.congestion_rent),
        "redispatch_cost": r2(rep.redispatch_cost),
        "sw_corrected": r2(rep.sw_corrected),
        "objective": r2(rep.objective),
        "per_zone": [
            {**asdict(z), "demand_mw": round(z.demand_mw, 3), "dispatched_mw": round(z.dispatched_mw, 3),
             "mcp": round(z.mcp, 2)}
            for z in rep.per_zone
        ],
        "zonal_flows": [{"from": f.from_zone, "to": f.to_zone, "mw": round(f.mw, 3)} for f in rep.zonal_flows],
    }
    if rep.reason:
        doc["reason"] = rep.reason
    return doc


def per_zone_csv(rep: SettlementReport) -> str:
    lines = ["zone,n_buses,demand_mw,n_generators,dispatched_mw,mcp"]
    for z in rep.per_zone:
        lines.append(f"{z.zone},{z.n_buses},{mw(z.demand_mw)},{z.n_generators},{mw(z.dispatched_mw)},{money(z.mcp)}")
    return "\n".join(lines) + "\n"


def write_report(rep: SettlementReport, out: Path):
    (out / f"{rep.division}.json").write_text(json.dumps(report_to_dict(rep), indent=1) + "\n")
    (out / f"{rep.division}_zones.csv").write_text(per_zone_csv(rep))


def comparison_csv(table: ComparisonTable) -> str:
    b = table.baseline
    lines = [
        f"# baseline_sw,{money(b.sw)}",
        f"# baseline_redispatch,{money(b.redispatch_cost)}",
        f"# baseline_sw_corr,{money(b.sw_corrected)}",
        f"# baseline_mcp,{money(b.mcp[b.zones[0]])}",
        "division,zones,d_sw,d_redispatch,d_sw_corr",
    ]
    for r in table.rows:
        if r.infeasible:
            lines.append(f"{r.division},{r.zones},infeasible,infeasible,infeasible")
        else:
            lines.append(f"{r.division},{r.zones},{money(r.d_sw)},{money(r.d_redispatch)},{money(r.d_sw_corrected)}")
    return "\n".join(lines) + "\n"
