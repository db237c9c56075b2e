"""Grid case and zone-division input.

Two case formats are understood: a subset of MATPOWER ``.m`` files and a
native JSON document whose fields mirror :class:`Network`. Zone divisions
are two-column CSV files (``bus_id,zone``).
"""

from __future__ import annotations

import csv
import io
import json
import math
import re
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components


class CaseError(ValueError):
    """Malformed or inconsistent grid case."""


class DivisionError(ValueError):
    """Malformed zone division, or one that does not cover the network."""


@dataclass(frozen=True)
class Bus:
    id: int
    load: float
    # fixed non-dispatchable infeed (MATPOWER buses with negative demand)
    injection: float = 0.0


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    reactance: float
    capacity: float | None = None  # None = unlimited


@dataclass(frozen=True)
class Generator:
    bus: int
    p_max: float
    marginal_cost: float


@dataclass(frozen=True)
class Network:
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    generators: tuple[Generator, ...]
    base_mva: float = 100.0

    def __post_init__(self):
        object.__setattr__(self, "buses", tuple(self.buses))
        object.__setattr__(self, "branches", tuple(self.branches))
        object.__setattr__(self, "generators", tuple(self.generators))
        self._validate()

    def _validate(self):
        if not self.buses:
            raise CaseError("network has no buses")
        ids = [b.id for b in self.buses]
        if len(set(ids)) != len(ids):
            dup = next(i for i in ids if ids.count(i) > 1)
            raise CaseError(f"duplicate bus id {dup}")
        known = set(ids)
        for b in self.buses:
            if b.load < 0 or b.injection < 0:
                raise CaseError(f"bus {b.id}: load and injection must be >= 0")
        for k, br in enumerate(self.branches):
            for end in (br.from_bus, br.to_bus):
                if end not in known:
                    raise CaseError(f"branch {k} references unknown bus {end}")
            if not br.reactance > 0:
                raise CaseError(f"branch {k}: reactance must be > 0")
            if br.capacity is not None and not br.capacity > 0:
                raise CaseError(f"branch {k}: capacity must be > 0 or unlimited")
        for k, g in enumerate(self.generators):
            if g.bus not in known:
                raise CaseError(f"generator {k} references unknown bus {g.bus}")
            if g.p_max < 0:
                raise CaseError(f"generator {k}: p_max must be >= 0")
        if self.base_mva <= 0:
            raise CaseError("base_mva must be > 0")
        n = len(self.buses)
        if n > 1:
            f, t = self.branch_ends
            adj = coo_matrix((np.ones(len(f)), (f, t)), shape=(n, n))
            n_comp, labels = connected_components(adj, directed=False)
            if n_comp > 1:
                isolated = self.buses[int(np.argmax(labels != labels[0]))].id
                raise CaseError(f"network is disconnected ({n_comp} islands, e.g. bus {isolated})")

    @cached_property
    def index(self) -> dict[int, int]:
        """External bus id -> dense 0-based index."""
        return {b.id: i for i, b in enumerate(self.buses)}

    @cached_property
    def branch_ends(self) -> tuple[np.ndarray, np.ndarray]:
        idx = self.index
        f = np.array([idx[b.from_bus] for b in self.branches], dtype=int)
        t = np.array([idx[b.to_bus] for b in self.branches], dtype=int)
        return f, t

    @property
    def n_buses(self) -> int:
        return len(self.buses)

    @property
    def n_branches(self) -> int:
        return len(self.branches)

    @cached_property
    def loads(self) -> np.ndarray:
        return np.array([b.load for b in self.buses])

    @cached_property
    def capacities(self) -> np.ndarray:
        """Branch ratings in MW, ``inf`` where unlimited."""
        return np.array([math.inf if b.capacity is None else b.capacity for b in self.branches])


@dataclass(frozen=True)
class ZoneDivision:
    assignment: dict[int, str]
    zones: tuple[str, ...]

    @cached_property
    def zone_index(self) -> dict[str, int]:
        return {z: j for j, z in enumerate(self.zones)}

    @property
    def n_zones(self) -> int:
        return len(self.zones)

    def bus_zones(self, net: Network) -> np.ndarray:
        """Zone index of every bus, in network bus order."""
        zi = self.zone_index
        return np.array([zi[self.assignment[b.id]] for b in net.buses], dtype=int)

    def members(self, net: Network) -> list[np.ndarray]:
        bz = self.bus_zones(net)
        return [np.flatnonzero(bz == j) for j in range(self.n_zones)]


def single_zone(net: Network, label: str = "ALL") -> ZoneDivision:
    return ZoneDivision({b.id: label for b in net.buses}, (label,))


def make_division(net: Network, assignment: dict[int, str]) -> ZoneDivision:
    """Validate a bus -> zone mapping against ``net``; zones keep first-seen order."""
    known = net.index
    for bus in assignment:
        if bus not in known:
            raise DivisionError(f"unknown bus id {bus}")
    missing = [b.id for b in net.buses if b.id not in assignment]
    if missing:
        more = f" (and {len(missing) - 1} more)" if len(missing) > 1 else ""
        raise DivisionError(f"bus {missing[0]} has no zone assignment{more}")
    zones = tuple(dict.fromkeys(assignment[b.id] for b in net.buses))
    return ZoneDivision(dict(assignment), zones)


# -- MATPOWER ---------------------------------------------------------------

# 0-based MATPOWER column positions
BUS_I, PD = 0, 2
F_BUS, T_BUS, BR_X, RATE_A, BR_STATUS = 0, 1, 3, 5, 10
GEN_BUS, GEN_STATUS, PMAX = 0, 7, 8
MODEL, NCOST, COST = 0, 3, 4

_BLOCK_START = re.compile(r"mpc\.(\w+)\s*=\s*\[")
_SCALAR = re.compile(r"mpc\.(\w+)\s*=\s*([^;\[{]+);")
_NUMBER = re.compile(r"[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$|[+-]?(Inf|inf|NaN|nan)$")


def _strip_comment(line: str) -> str:
    # MATPOWER files do not put '%' inside strings in numeric blocks
    pos = line.find("%")
    return line if pos < 0 else line[:pos]


def _parse_blocks(text: str) -> tuple[dict[str, list[list[float]]], dict[str, str]]:
    blocks: dict[str, list[list[float]]] = {}
    scalars: dict[str, str] = {}
    lines = text.splitlines()
    i = 0
    while i < len(lines):
        line = _strip_comment(lines[i])
        m = _BLOCK_START.search(line)
        if not m:
            s = _SCALAR.search(line)
            if s:
                scalars[s.group(1)] = s.group(2).strip()
            i += 1
            continue
        name = m.group(1)
        rows: list[list[float]] = []
        current: list[float] = []
        rest = line[m.end():]
        col_offset = m.end()
        closed = False
        while True:
            pos = 0
            for tok in re.finditer(r"[^\s,;\]]+|;|\]", rest):
                t = tok.group(0)
                if t == ";":
                    if current:
                        rows.append(current)
                    current = []
                elif t == "]":
                    closed = True
                    break
                elif _NUMBER.match(t):
                    current.append(float(t))
                else:
                    col = col_offset + tok.start() + 1
                    raise CaseError(f"line {i + 1}, column {col}: unexpected token {t!r} in mpc.{name}")
                pos = tok.end()
            if closed:
                break
            # a row also ends at a line break
            if current:
                rows.append(current)
                current = []
            i += 1
            if i >= len(lines):
                raise CaseError(f"line {i}: unterminated matrix mpc.{name}")
            rest = _strip_comment(lines[i])
            col_offset = 0
        if current:
            rows.append(current)
        widths = {len(r) for r in rows}
        if len(widths) > 1:
            raise CaseError(f"mpc.{name}: rows have inconsistent lengths {sorted(widths)}")
        blocks[name] = rows
        i += 1
    return blocks, scalars


def _linear_cost(row: list[float], k: int) -> float:
    model = int(row[MODEL])
    n = int(row[NCOST])
    if model == 2:
        coeffs = row[COST:COST + n]
        if len(coeffs) < n:
            raise CaseError(f"gencost row {k}: expected {n} coefficients")
        # coefficients run from the highest power down to c0
        if any(c != 0 for c in coeffs[:-2]):
            raise CaseError(f"gencost row {k}: nonlinear cost model (polynomial of degree {n - 1})")
        return coeffs[-2] if n >= 2 else 0.0
    if model == 1:
        pts = row[COST:COST + 2 * n]
        if n != 2:
            raise CaseError(f"gencost row {k}: nonlinear cost model (piecewise linear, {n} points)")
        (x0, y0, x1, y1) = pts
        if x1 == x0:
            raise CaseError(f"gencost row {k}: degenerate piecewise-linear cost")
        return (y1 - y0) / (x1 - x0)
    raise CaseError(f"gencost row {k}: unknown cost model {model}")


def parse_matpower(text: str) -> Network:
    """Build a :class:`Network` from the text of a MATPOWER case file.

    Only bus demand, branch reactance/rating/status, generator bus/status/PMAX
    and linear generation costs are used. Out-of-service branches and
    generators are dropped. Negative bus demand is kept as a fixed
    injection. ``RATE_A = 0`` means unlimited.
    """
    blocks, scalars = _parse_blocks(text)
    for name in ("bus", "branch", "gen", "gencost"):
        if name not in blocks:
            raise CaseError(f"missing matrix block mpc.{name}")
    base = float(scalars.get("baseMVA", 100.0))

    buses = []
    for row in blocks["bus"]:
        pd = row[PD]
        buses.append(Bus(int(row[BUS_I]), max(pd, 0.0), max(-pd, 0.0)))
    known = {b.id for b in buses}

    branches = []
    for k, row in enumerate(blocks["branch"]):
        f, t = int(row[F_BUS]), int(row[T_BUS])
        for end in (f, t):
            if end not in known:
                raise CaseError(f"branch row {k + 1} references unknown bus {end}")
        if len(row) > BR_STATUS and row[BR_STATUS] <= 0:
            continue
        rate = row[RATE_A]
        branches.append(Branch(f, t, row[BR_X], rate if rate > 0 else None))

    gens = []
    gen_rows = blocks["gen"]
    cost_rows = blocks["gencost"]
    if len(cost_rows) < len(gen_rows):
        raise CaseError(f"mpc.gencost has {len(cost_rows)} rows for {len(gen_rows)} generators")
    for k, (row, cost) in enumerate(zip(gen_rows, cost_rows)):
        if int(row[GEN_BUS]) not in known:
            raise CaseError(f"generator row {k + 1} references unknown bus {int(row[GEN_BUS])}")
        mc = _linear_cost(cost, k + 1)
        if row[GEN_STATUS] <= 0:
            continue
        gens.append(Generator(int(row[GEN_BUS]), row[PMAX], mc))

    return Network(tuple(buses), tuple(branches), tuple(gens), base)


# -- native format ------------------------------------------------------------

def network_to_dict(net: Network) -> dict:
    return {
        "buses": [{"id": b.id, "load": float(b.load), "injection": float(b.injection)} for b in net.buses],
        "branches": [
            {
                "from": br.from_bus,
                "to": br.to_bus,
                "reactance": float(br.reactance),
                "capacity": None if br.capacity is None else float(br.capacity),
            }
            for br in net.branches
        ],
        "generators": [
            {"bus": g.bus, "p_max": float(g.p_max), "marginal_cost": float(g.marginal_cost)}
            for g in net.generators
        ],
        "base_mva": float(net.base_mva),
    }


def dump_network(net: Network) -> str:
    """Canonical native serialization (fixed field order, shortest round-trip floats)."""
    return json.dumps(network_to_dict(net), indent=1) + "\n"


def parse_network(text: str) -> Network:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CaseError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    try:
        buses = [Bus(int(b["id"]), float(b["load"]), float(b.get("injection", 0.0))) for b in doc["buses"]]
        branches = [
            Branch(
                int(b["from"]),
                int(b["to"]),
                float(b["reactance"]),
                None if b.get("capacity") is None else float(b["capacity"]),
            )
            for b in doc["branches"]
        ]
        gens = [Generator(int(g["bus"]), float(g["p_max"]), float(g["marginal_cost"])) for g in doc["generators"]]
        base = float(doc.get("base_mva", 100.0))
    except (KeyError, TypeError) as exc:
        raise CaseError(f"native network document: missing or invalid field {exc}") from None
    return Network(tuple(buses), tuple(branches), tuple(gens), base)


def load_case(path: str | Path) -> Network:
    """Read a case file, choosing the parser by extension (``.m`` or ``.json``)."""
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".m":
        return parse_matpower(text)
    return parse_network(text)


# -- zone divisions -----------------------------------------------------------

def _read_table(text: str, header: tuple[str, str], what: str) -> list[tuple[int, str, int]]:
    reader = csv.reader(io.StringIO(text))
    rows = []
    seen_header = False
    for lineno, rec in enumerate(reader, start=1):
        if not rec or all(not c.strip() for c in rec):
            continue
        rec = [c.strip() for c in rec]
        if not seen_header:
            seen_header = True
            if tuple(c.lower() for c in rec) == header:
                continue
        if len(rec) != 2:
            raise DivisionError(f"{what} line {lineno}: expected 2 fields, got {len(rec)}")
        try:
            bus = int(rec[0])
        except ValueError:
            raise DivisionError(f"{what} line {lineno}: bad bus id {rec[0]!r}") from None
        rows.append((bus, rec[1], lineno))
    return rows


def load_zone_division(text: str, net: Network) -> ZoneDivision:
    """Parse a ``bus_id,zone`` table into a total division of ``net``."""
    assignment: dict[int, str] = {}
    for bus, zone, lineno in _read_table(text, ("bus_id", "zone"), "division"):
        if not zone:
            raise DivisionError(f"division line {lineno}: empty zone label")
        if bus in assignment and assignment[bus] != zone:
            raise DivisionError(
                f"division line {lineno}: bus {bus} assigned to both {assignment[bus]!r} and {zone!r}"
            )
        assignment[bus] = zone
    return make_division(net, assignment)


def dump_zone_division(div: ZoneDivision, net: Network) -> str:
    lines = ["bus_id,zone"] + [f"{b.id},{div.assignment[b.id]}" for b in net.buses]
    return "\n".join(lines) + "\n"


def load_wind(text: str, net: Network) -> dict[int, float]:
    """Parse a ``bus_id,mw`` table of zero-price wind infeed."""
    wind: dict[int, float] = {}
    for bus, mw, lineno in _read_table(text, ("bus_id", "mw"), "wind"):
        if bus not in net.index:
            raise CaseError(f"wind line {lineno}: unknown bus id {bus}")
        try:
            value = float(mw)
        except ValueError:
            raise CaseError(f"wind line {lineno}: bad MW value {mw!r}") from None
        if value < 0:
            raise CaseError(f"wind line {lineno}: negative wind output")
        wind[bus] = wind.get(bus, 0.0) + value
    return wind
