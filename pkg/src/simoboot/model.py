"""Converter description types and validation.

Everything is strict SI (V, A, s, H, F, ohm), in files as well as in code.
All types are immutable after construction and safe to share between
threads or processes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field


@dataclass(frozen=True)
class DiodeModel:
    """Ideal-offset diode: open below v_f, offset plus series resistance above."""

    v_f: float = 0.3  # forward offset (V)
    r_s: float = 0.0  # series resistance when conducting (ohm)


@dataclass(frozen=True)
class SwitchModel:
    r_on: float  # on-resistance (ohm)
    blocks_reverse: bool = False  # true for the back-to-back output pairs


@dataclass(frozen=True)
class LoadModel:
    """Constant-current load with a resistive floor.

    Draws i_load above v_floor; below the floor it degrades to a resistor
    of v_floor / i_load so a discharged output is never dragged negative.
    """

    i_load: float  # A
    v_floor: float = 0.1  # V

    def current(self, v: float) -> float:
        if self.i_load == 0.0:
            return 0.0
        if v >= self.v_floor:
            return self.i_load
        return self.i_load * v / self.v_floor


@dataclass(frozen=True)
class OutputSpec:
    """One output delivery network: series switch pair, freewheel diode, cap, load."""

    target: float  # regulation setpoint (V)
    c_out: float  # output capacitor (F)
    load: LoadModel
    r_on_each: float  # each switch of the series pair; the pair conducts at 2x (ohm)
    c_gate: float  # lumped gate capacitance of the switch pair (F)
    d_j: DiodeModel = DiodeModel()
    hysteresis: float = 0.01  # comparator half-band around target (V)


@dataclass(frozen=True)
class InductorSpec:
    l: float  # H
    r_series: float = 0.0  # winding resistance (ohm)


@dataclass(frozen=True)
class BootstrapSpec:
    """Shared bootstrap network: one off-chip cap recharged from a drive rail."""

    c_boot: float  # F
    v_drive: float  # rail that recharges the cap through d_b (V)
    d_b: DiodeModel = DiodeModel()
    r_charge: float = 1.0  # recharge path resistance excluding the diode (ohm)


@dataclass(frozen=True)
class ControllerParams:
    i_pk: float  # peak-current limit (A)
    t_on_max: float = 1e-6  # charge-phase duration cap (s)
    t_deliver_max: float = 2e-6  # deliver-slot duration cap (s)
    arbitration_start: int = 0  # round-robin cursor at t = 0
    gate_threshold: float = 1.0  # minimum overdrive to enable an output switch (V)


@dataclass(frozen=True)
class SimParams:
    dt: float  # integration step (s)
    t_end: float  # run length (s)
    sample_every: int = 100  # record one sample per this many steps


@dataclass(frozen=True)
class DriverSpec:
    """High-side p-type driver bias: resistor divider plus a stacked clamp."""

    r1: float = 200e3
    r2: float = 200e3
    v_gs_unit: float = 0.7  # gate-source drop of one diode-connected clamp device (V)


@dataclass(frozen=True)
class ConverterSpec:
    v_in: float
    inductor: InductorSpec
    bootstrap: BootstrapSpec
    switch_sp: SwitchModel
    switch_sy: SwitchModel
    outputs: tuple[OutputSpec, ...]
    controller: ControllerParams
    sim: SimParams
    driver: DriverSpec = field(default_factory=DriverSpec)

    @property
    def n_outputs(self) -> int:
        return len(self.outputs)


def nominal_boot_voltage(spec: ConverterSpec) -> float:
    """Steady recharge target of the bootstrap capacitor.

    The cap charges from the drive rail through the recharge diode, so it
    settles one forward drop below the rail.
    """
    return spec.bootstrap.v_drive - spec.bootstrap.d_b.v_f


def _check(violations, ok, path, message):
    if not ok:
        violations.append(f"{path}: {message}")


def _finite(x) -> bool:
    return isinstance(x, (int, float)) and math.isfinite(x)


def validate(spec: ConverterSpec) -> list[str]:
    """Check every invariant of a converter description.

    Returns one human-readable entry per violation, each naming the offending
    field; an empty list means the spec is usable. Never raises: violations
    are data, not failures.
    """
    v: list[str] = []

    def pos(x, path):
        _check(v, _finite(x) and x > 0, path, f"must be finite and > 0 (got {x!r})")

    def nonneg(x, path):
        _check(v, _finite(x) and x >= 0, path, f"must be finite and >= 0 (got {x!r})")

    pos(spec.v_in, "v_in")
    pos(spec.inductor.l, "inductor.l")
    nonneg(spec.inductor.r_series, "inductor.r_series")

    bst = spec.bootstrap
    pos(bst.c_boot, "bootstrap.c_boot")
    pos(bst.v_drive, "bootstrap.v_drive")
    nonneg(bst.r_charge, "bootstrap.r_charge")
    nonneg(bst.d_b.v_f, "bootstrap.d_b.v_f")
    nonneg(bst.d_b.r_s, "bootstrap.d_b.r_s")
    if _finite(bst.r_charge) and _finite(bst.d_b.r_s):
        _check(v, bst.r_charge + bst.d_b.r_s > 0, "bootstrap.r_charge",
               "recharge path needs r_charge + d_b.r_s > 0")

    nonneg(spec.switch_sp.r_on, "switch_sp.r_on")
    nonneg(spec.switch_sy.r_on, "switch_sy.r_on")

    _check(v, len(spec.outputs) >= 1, "outputs", "need at least one output")
    for k, out in enumerate(spec.outputs):
        p = f"outputs[{k}]"
        pos(out.target, f"{p}.target")
        pos(out.c_out, f"{p}.c_out")
        nonneg(out.load.i_load, f"{p}.load.i_load")
        pos(out.load.v_floor, f"{p}.load.v_floor")
        nonneg(out.r_on_each, f"{p}.r_on_each")
        nonneg(out.c_gate, f"{p}.c_gate")
        nonneg(out.d_j.v_f, f"{p}.d_j.v_f")
        nonneg(out.d_j.r_s, f"{p}.d_j.r_s")
        pos(out.hysteresis, f"{p}.hysteresis")
        if _finite(out.hysteresis) and _finite(out.target):
            _check(v, out.hysteresis < out.target, f"{p}.hysteresis",
                   f"must be below the target (got {out.hysteresis!r} vs {out.target!r})")

    ctl = spec.controller
    pos(ctl.i_pk, "controller.i_pk")
    pos(ctl.t_on_max, "controller.t_on_max")
    pos(ctl.t_deliver_max, "controller.t_deliver_max")
    pos(ctl.gate_threshold, "controller.gate_threshold")
    n = len(spec.outputs)
    _check(v, isinstance(ctl.arbitration_start, int) and 0 <= ctl.arbitration_start < max(n, 1),
           "controller.arbitration_start", f"must be an index in [0, {max(n, 1)})")
    if _finite(bst.v_drive) and _finite(ctl.gate_threshold):
        _check(v, bst.v_drive > ctl.gate_threshold, "bootstrap.v_drive",
               "must exceed controller.gate_threshold or no switch can ever turn on")

    sim = spec.sim
    pos(sim.dt, "sim.dt")
    pos(sim.t_end, "sim.t_end")
    if _finite(sim.dt) and _finite(sim.t_end):
        _check(v, sim.dt <= sim.t_end, "sim.dt",
               f"step {sim.dt!r} exceeds run length {sim.t_end!r}")
    _check(v, isinstance(sim.sample_every, int) and sim.sample_every >= 1,
           "sim.sample_every", "must be an integer >= 1")

    pos(spec.driver.r1, "driver.r1")
    pos(spec.driver.r2, "driver.r2")
    pos(spec.driver.v_gs_unit, "driver.v_gs_unit")

    return v
