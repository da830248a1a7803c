"""Core data model: gas/power network types, validation, units, and the
spatio-temporal grid used by every solver module.

Internal units are SI (Pa, kg/s, m, s).  Gas volumes in kcf/hr and costs in
$/kcf appear only at I/O boundaries and are converted through the standard
gas density ``rho_std``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

KCF_M3 = 28.3168  # cubic metres per thousand cubic feet


class ModelError(ValueError):
    """Raised for invalid model construction or inputs."""


def kcf_per_hr_to_kg_per_s(v: float, rho_std: float) -> float:
    """Convert a volumetric rate at standard density to mass flow."""
    if rho_std <= 0:
        raise ModelError(f"rho_std must be positive, got {rho_std}")
    return v * KCF_M3 * rho_std / 3600.0


def kg_per_s_to_kcf_per_hr(m: float, rho_std: float) -> float:
    """Exact inverse of :func:`kcf_per_hr_to_kg_per_s`."""
    if rho_std <= 0:
        raise ModelError(f"rho_std must be positive, got {rho_std}")
    return m * 3600.0 / (KCF_M3 * rho_std)


def segmentize(length_m: float, dx_m: float) -> int:
    """Number of finite-difference segments for a pipe of the given length.

    At least two segments are always produced because the junction coupling
    constraints reference both the first and the last segment.
    """
    if length_m <= 0 or dx_m <= 0:
        raise ModelError(
            f"length and dx must be positive, got length={length_m}, dx={dx_m}"
        )
    return max(2, int(math.floor(length_m / dx_m + 0.5)))


@dataclass(frozen=True)
class Junction:
    id: str
    pr_min: float  # Pa
    pr_max: float  # Pa
    is_compressor_inlet: bool = False
    compression_ratio: float = 1.1  # only meaningful when compressor inlet


@dataclass(frozen=True)
class Pipe:
    id: str
    from_junction: str
    to_junction: str
    length: float  # m
    diameter: float  # m
    friction: float = 0.01


@dataclass(frozen=True)
class Supplier:
    id: str
    junction: str
    v_min: float  # kcf/hr
    v_max: float  # kcf/hr
    cost: float  # $/kcf


@dataclass(frozen=True)
class GasLoad:
    """Firm (non-sheddable) gas demand with a piecewise-linear profile.

    ``profile`` is a list of (minute-of-day, kcf/hr) breakpoints; values are
    interpolated linearly and held constant outside the breakpoint range.
    """

    id: str
    junction: str
    profile: tuple = ()

    def value_at(self, minute: float) -> float:
        pts = self.profile
        if not pts:
            return 0.0
        if minute <= pts[0][0]:
            return float(pts[0][1])
        if minute >= pts[-1][0]:
            return float(pts[-1][1])
        for (m0, v0), (m1, v1) in zip(pts, pts[1:]):
            if m0 <= minute <= m1:
                if m1 == m0:
                    return float(v1)
                w = (minute - m0) / (m1 - m0)
                return float(v0 + w * (v1 - v0))
        return float(pts[-1][1])


@dataclass(frozen=True)
class GasFiredUnit:
    """Coupling point: a generator on the power side fuelled from a junction.

    Fuel use is heat-rate based: F(P) = heat_rate * P + fuel_quad * P**2,
    in kcf/hr for P in MW.
    """

    id: str
    bus: str
    junction: str
    heat_rate: float  # kcf/MWh
    fuel_quad: float = 0.0

    def fuel(self, p_mw: float) -> float:
        if p_mw < 0:
            raise ModelError(f"negative dispatch {p_mw} for unit {self.id}")
        return self.heat_rate * p_mw + self.fuel_quad * p_mw * p_mw


@dataclass(frozen=True)
class GasNetwork:
    junctions: tuple
    pipes: tuple
    suppliers: tuple
    loads: tuple
    units: tuple

    def junction(self, jid: str) -> Junction:
        for j in self.junctions:
            if j.id == jid:
                return j
        raise ModelError(f"unknown junction {jid!r}")

    def pipes_from(self, jid: str):
        return [p for p in self.pipes if p.from_junction == jid]

    def pipes_to(self, jid: str):
        return [p for p in self.pipes if p.to_junction == jid]


@dataclass(frozen=True)
class Bus:
    id: str
    demand: tuple = ()  # MW per hour of the horizon


@dataclass(frozen=True)
class Branch:
    id: str
    from_bus: str
    to_bus: str
    reactance: float  # p.u.
    limit: float  # MW


@dataclass(frozen=True)
class Generator:
    id: str
    bus: str
    p_min: float
    p_max: float
    cost_a: float = 0.0  # $/MW^2 h
    cost_b: float = 0.0  # $/MWh
    cost_c: float = 0.0  # $/h
    kind: str = "thermal"  # thermal | gas-fired | PV | WT
    profile: tuple = ()  # hourly availability cap (MW) for PV/WT


@dataclass(frozen=True)
class PowerNetwork:
    buses: tuple
    branches: tuple
    generators: tuple

    def bus_ids(self):
        return [b.id for b in self.buses]


@dataclass(frozen=True)
class Scenario:
    horizon_hours: int
    dt_s: float = 300.0
    dx_m: float = 5000.0
    kappa_e: float = 1000.0  # $/MWh of unserved electric demand
    kappa_g: float = 100.0  # $/kcf of unserved gas-fired fuel
    c_sound: float = 340.0  # m/s
    rho_std: float = 0.8  # kg/m^3
    start_hour: int = 0  # hour of day at t = 0
    initial_mode: str = "steady"
    init_pressure_frac: float = 0.85  # reference pressure as a pr_max fraction
    # optional externally supplied gas-fired dispatch (unit id -> MW per hour),
    # used instead of a DC-OPF solve when present
    unit_dispatch: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dt_s <= 0 or self.dx_m <= 0:
            raise ModelError("dt and dx must be positive")
        if self.c_sound <= 0:
            raise ModelError("speed of sound must be positive")
        if self.horizon_hours < 0:
            raise ModelError("horizon must be nonnegative")
        if (self.horizon_hours * 3600) % self.dt_s != 0:
            raise ModelError("horizon must be an integer number of time steps")

    @property
    def n_steps(self) -> int:
        """T: dynamics run over t = 0..T with difference rows at 0..T-1."""
        return int(self.horizon_hours * 3600 // self.dt_s)

    @property
    def steps_per_hour(self) -> int:
        return int(3600 // self.dt_s)

    def minute_of(self, t: int) -> float:
        return self.start_hour * 60.0 + t * self.dt_s / 60.0


@dataclass(frozen=True)
class Grid:
    """Index sets of the discretized problem: time steps and pipe segments."""

    n_steps: int  # T
    n_seg: dict  # pipe id -> segment count

    def segments(self, pipe_id: str):
        return range(1, self.n_seg[pipe_id] + 1)

    def dyn_rows(self, pipe_id: str):
        """(s, t) pairs for which difference rows are instantiated."""
        return [
            (s, t)
            for s in range(1, self.n_seg[pipe_id])
            for t in range(self.n_steps)
        ]


def build_grid(gas: GasNetwork, scenario: Scenario) -> Grid:
    n_seg = {p.id: segmentize(p.length, scenario.dx_m) for p in gas.pipes}
    return Grid(n_steps=scenario.n_steps, n_seg=n_seg)


@dataclass
class ValidationReport:
    findings: list = field(default_factory=list)

    def add(self, msg: str):
        self.findings.append(msg)

    @property
    def ok(self) -> bool:
        return not self.findings


def validate(gas: GasNetwork, power: PowerNetwork | None = None) -> ValidationReport:
    """Check referential integrity and the per-type invariants.

    Violations are reported, never raised; an empty report means the model is
    well formed.
    """
    rep = ValidationReport()
    jids = {j.id for j in gas.junctions}
    if len(jids) != len(gas.junctions):
        rep.add("duplicate junction ids")
    for j in gas.junctions:
        if not (0 < j.pr_min <= j.pr_max):
            rep.add(f"junction {j.id}: invalid pressure bounds "
                    f"[{j.pr_min}, {j.pr_max}]")
        if j.is_compressor_inlet and j.compression_ratio < 1.0:
            rep.add(f"junction {j.id}: compression ratio < 1")
    for p in gas.pipes:
        if p.from_junction not in jids:
            rep.add(f"pipe {p.id}: unknown from_junction {p.from_junction!r}")
        if p.to_junction not in jids:
            rep.add(f"pipe {p.id}: unknown to_junction {p.to_junction!r}")
        if p.length <= 0:
            rep.add(f"pipe {p.id}: nonpositive length")
        if p.diameter <= 0:
            rep.add(f"pipe {p.id}: nonpositive diameter")
        if p.friction <= 0:
            rep.add(f"pipe {p.id}: nonpositive friction factor")
    for g in gas.suppliers:
        if g.junction not in jids:
            rep.add(f"supplier {g.id}: unknown junction {g.junction!r}")
        if not (0 <= g.v_min <= g.v_max):
            rep.add(f"supplier {g.id}: invalid bounds [{g.v_min}, {g.v_max}]")
        if g.cost < 0:
            rep.add(f"supplier {g.id}: negative cost")
    for l in gas.loads:
        if l.junction not in jids:
            rep.add(f"load {l.id}: unknown junction {l.junction!r}")
        if any(v < 0 for _, v in l.profile):
            rep.add(f"load {l.id}: negative profile value")
    bus_ids = {b.id for b in power.buses} if power is not None else None
    for u in gas.units:
        if u.junction not in jids:
            rep.add(f"unit {u.id}: unknown junction {u.junction!r}")
        if u.heat_rate < 0 or u.fuel_quad < 0:
            rep.add(f"unit {u.id}: decreasing fuel function")
        if bus_ids is not None and u.bus not in bus_ids:
            rep.add(f"unit {u.id}: unknown bus {u.bus!r}")
    if power is not None:
        if len(bus_ids) != len(power.buses):
            rep.add("duplicate bus ids")
        for br in power.branches:
            if br.from_bus not in bus_ids:
                rep.add(f"branch {br.id}: unknown from_bus {br.from_bus!r}")
            if br.to_bus not in bus_ids:
                rep.add(f"branch {br.id}: unknown to_bus {br.to_bus!r}")
            if br.reactance == 0:
                rep.add(f"branch {br.id}: zero reactance")
            if br.limit <= 0:
                rep.add(f"branch {br.id}: nonpositive limit")
        gen_ids = set()
        for gen in power.generators:
            if gen.id in gen_ids:
                rep.add(f"duplicate generator id {gen.id!r}")
            gen_ids.add(gen.id)
            if gen.bus not in bus_ids:
                rep.add(f"generator {gen.id}: unknown bus {gen.bus!r}")
            if gen.p_min > gen.p_max:
                rep.add(f"generator {gen.id}: p_min > p_max")
            if gen.cost_a < 0:
                rep.add(f"generator {gen.id}: concave cost (a < 0)")
        unit_buses = {u.bus for u in gas.units}
        gasgen_buses = {g.bus for g in power.generators if g.kind == "gas-fired"}
        for b in unit_buses - gasgen_buses:
            rep.add(f"gas-fired coupling at bus {b!r} has no gas-fired generator")
    return rep
