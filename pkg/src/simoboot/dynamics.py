"""Phase-wise piecewise-linear circuit equations.

The converter runs one of three switch configurations at any instant:

  CHARGE      S_p and S_y closed. The inductor ramps from the input
              (v_in = L di/dt less resistive drops) while the bootstrap
              capacitor, its bottom plate grounded through S_y, recharges
              from the drive rail through the recharge diode.
  DELIVER(j)  S_p closed, S_y open, output pair j on: boost-style path
              from the input through the inductor into output j. The
              bootstrap bottom plate rides the switch node, so its top
              plate sits at v_out[j] + v_boot (plus resistive drop).
  IDLE        S_y closed with zero inductor current; outputs discharge
              into their loads, the bootstrap keeps recharging.

S_p stays closed during delivery: boosting 12 V from a sub-4.2 V input
requires the input in series with the inductor, and the same path serves
below-input targets with the controller steering the residual current.

Within one phase every branch is affine, so each segment admits an exact
closed form; `analytic_rl_segment` is the independent oracle the engine
is verified against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum
from typing import Optional

from .model import ConverterSpec, DriverSpec


class Phase(IntEnum):
    """Switch configuration. DELIVER carries the selected output index alongside."""

    CHARGE = 0
    DELIVER = 1
    IDLE = 2


PHASE_TAGS = {Phase.CHARGE: "C", Phase.DELIVER: "D", Phase.IDLE: "I"}


@dataclass(frozen=True)
class CircuitState:
    """Instantaneous dynamical state.

    v_boot is the voltage across the bootstrap capacitor (top minus bottom
    plate); selected is the output index being served, -1 outside DELIVER
    (during CHARGE it names the output the cycle is charging for).
    """

    t: float
    i_l: float
    v_boot: float
    v_out: tuple[float, ...]
    phase: Phase
    selected: int = -1


@dataclass(frozen=True)
class NodeVoltages:
    """Derived node voltages; v_boot_top == v_l_plus + v_boot by construction.

    v_s and v_gate_sel are only defined while an output switch conducts.
    """

    v_l_plus: float
    v_boot_top: float
    v_s: Optional[float] = None
    v_gate_sel: Optional[float] = None


def recharge_current(v_boot: float, spec: ConverterSpec) -> float:
    """Bootstrap recharge current through d_b while the bottom plate is grounded."""
    bst = spec.bootstrap
    return max(0.0, (bst.v_drive - bst.d_b.v_f - v_boot) / (bst.r_charge + bst.d_b.r_s))


def derivative(state: CircuitState, spec: ConverterSpec):
    """Time derivatives (di_l, dv_boot, dv_out) for the active phase.

    The phase is taken from the state and held fixed; event handling between
    phases is the engine's job.
    """
    ind = spec.inductor
    i_l = state.i_l
    n = spec.n_outputs
    dv_out = [0.0] * n
    for k, out in enumerate(spec.outputs):
        dv_out[k] = -out.load.current(state.v_out[k]) / out.c_out

    if state.phase is Phase.CHARGE:
        r = spec.switch_sp.r_on + spec.switch_sy.r_on + ind.r_series
        di = (spec.v_in - i_l * r) / ind.l
        dvb = recharge_current(state.v_boot, spec) / spec.bootstrap.c_boot
        return di, dvb, tuple(dv_out)

    if state.phase is Phase.DELIVER:
        j = state.selected
        if not 0 <= j < n:
            raise IndexError(f"deliver phase with selected={j} outside 0..{n - 1}")
        out = spec.outputs[j]
        r = spec.switch_sp.r_on + ind.r_series + 2.0 * out.r_on_each
        di = (spec.v_in - state.v_out[j] - i_l * r) / ind.l
        dv_out[j] = (i_l - out.load.current(state.v_out[j])) / out.c_out
        return di, 0.0, tuple(dv_out)

    if state.phase is Phase.IDLE:
        dvb = recharge_current(state.v_boot, spec) / spec.bootstrap.c_boot
        return 0.0, dvb, tuple(dv_out)

    raise ValueError(f"unknown phase {state.phase!r}")


def node_voltages(state: CircuitState, spec: ConverterSpec) -> NodeVoltages:
    """Switch node, bootstrap top plate and (in DELIVER) gate/source of the pair."""
    if state.phase is Phase.DELIVER:
        out = spec.outputs[state.selected]
        v_l_plus = state.v_out[state.selected] + state.i_l * 2.0 * out.r_on_each
        v_s = state.v_out[state.selected] + state.i_l * out.r_on_each
        v_top = v_l_plus + state.v_boot
        return NodeVoltages(v_l_plus, v_top, v_s, v_gate_sel=v_top)
    if state.phase is Phase.CHARGE:
        v_l_plus = state.i_l * spec.switch_sy.r_on
    else:
        v_l_plus = 0.0
    return NodeVoltages(v_l_plus, v_l_plus + state.v_boot)


def gate_overdrive(state: CircuitState, spec: ConverterSpec, j: int) -> float:
    """Gate-source voltage applied to the conducting output switch pair.

    Equals v_boot + i_l * r_on_each: the bootstrap voltage rides the moving
    source node, so the overdrive is independent of the output level being
    served. Only meaningful while DELIVER(j) is active.
    """
    if state.phase is not Phase.DELIVER or state.selected != j:
        raise ValueError(
            f"gate_overdrive needs phase DELIVER({j}), got "
            f"{state.phase.name}({state.selected})")
    return state.v_boot + state.i_l * spec.outputs[j].r_on_each


def driver_bias(v_boot_top: float, drv: DriverSpec) -> float:
    """Source-gate bias of the p-type driver: divider output, clamped.

    The stacked diode-connected devices across r1 cap the bias at four
    gate-source drops regardless of how high the top plate flies.
    """
    if v_boot_top < 0:
        raise ValueError(f"v_boot_top must be >= 0, got {v_boot_top!r}")
    divider = v_boot_top * drv.r1 / (drv.r1 + drv.r2)
    return min(divider, 4.0 * drv.v_gs_unit)


def analytic_rl_segment(i0: float, v_eff: float, r_tot: float, l: float, t: float) -> float:
    """Closed-form series R-L current after time t under a constant drive.

    i(t) = v/r + (i0 - v/r) exp(-r t / l), degenerating to the linear ramp
    i0 + v t / l as r -> 0. Used as the independent oracle for the engine.
    """
    if l <= 0:
        raise ValueError("l must be > 0")
    if t < 0:
        raise ValueError("t must be >= 0")
    if r_tot < 0:
        raise ValueError("r_tot must be >= 0")
    if r_tot == 0.0:
        return i0 + v_eff * t / l
    x = r_tot * t / l
    # expm1 keeps full precision in the r_tot -> 0 limit
    return i0 * math.exp(-x) + (v_eff / r_tot) * -math.expm1(-x)
