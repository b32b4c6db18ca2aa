"""Fixed-step transient simulation with event localization.

The integrator is classical fixed-step RK4 with the phase held constant
across a step. For an affine field y' = A y + b one RK4 step collapses to
the exact affine map

    y1 = P4(hA) y0 + h Q4(hA) b,
    P4(z) = 1 + z + z^2/2 + z^3/6 + z^4/24,
    Q4(z) = 1 + z/2 + z^2/6 + z^3/24,

so `simulate` precomputes that map once per segment and iterates it, which
is what makes nanosecond steps over millisecond runs affordable in Python.
`step` is the straightforward reference implementation of the same method;
the two agree to rounding.

Events (peak current, inductor zero-cross, comparator trips, load-floor
kinks, phase timers) split the step at the located crossing; the inductor
current is clamped to exactly zero on a zero-cross because the back-to-back
output pair blocks reverse conduction. Gate charge is pulled out of the
bootstrap capacitor at every output-switch turn-on by capacitive charge
sharing (v_boot scales by c_boot / (c_boot + c_gate)).

Energy bookkeeping: conduction and the served-output integrals accumulate
trapezoidally over the stepped block; the decoupled branches (bootstrap
recharge, unserved load decay) use endpoint identities that are exactly
conservative. e_in aggregates both sources feeding the converter: the main
input (over intervals with S_p closed) and the gate-drive rail (through the
recharge diode), so

    e_in = sum(e_out) + e_cond + e_diode + e_gate + e_boot_recharge
           + (stored_final - stored_initial)

holds to integration accuracy on every run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .control import (RESIDUAL_EPS, highest_target_index,
                      initial_controller_state, next_action)
from .dynamics import CircuitState, Phase, derivative
from .model import ConverterSpec, nominal_boot_voltage, validate


class SimulationError(RuntimeError):
    """Raised when the state goes non-finite or the spec is unusable."""


# ---------------------------------------------------------------------------
# events and traces

EVENT_KINDS = (
    "phase_change",     # switch configuration changed (info: e.g. "C->D[2]")
    "peak_limit",       # inductor current reached i_pk
    "current_zero",     # inductor current reached zero and was clamped (DCM)
    "comparator_trip",  # served output crossed target + hysteresis
    "deliver_timeout",  # slot hit t_deliver_max
    "charge_timeout",   # charge phase hit t_on_max
    "wake",             # an output sagged below target - hysteresis during idle
    "load_floor",       # an output crossed its load-model floor voltage
    "gate_underdrive",  # turn-on commanded with overdrive below the threshold
    "warning",          # repeated timeouts without regulation progress
)


@dataclass(frozen=True)
class Event:
    t: float
    kind: str
    index: int = -1  # output index when applicable
    info: str = ""


@dataclass
class LedgerSeries:
    """Cumulative ledger entries sampled alongside the trace (J)."""

    t: np.ndarray
    e_in: np.ndarray
    e_out_sum: np.ndarray
    e_cond: np.ndarray
    e_diode: np.ndarray
    e_gate: np.ndarray
    e_boot_recharge: np.ndarray


@dataclass
class EnergyLedger:
    """Energy totals over a run; loss entries are all non-negative."""

    e_in: float = 0.0  # main input + gate-drive rail (J)
    e_in_main: float = 0.0  # integral of v_in * i_l while S_p is closed
    e_drive_in: float = 0.0  # drive-rail energy into the recharge path
    e_out: list[float] = field(default_factory=list)  # per output
    e_cond: float = 0.0  # switch + winding conduction
    e_diode: float = 0.0  # recharge diode offset + series drop
    e_gate: float = 0.0  # bootstrap charge-sharing at turn-ons
    e_boot_recharge: float = 0.0  # recharge path resistor
    e_stored_initial: float = 0.0
    e_stored_final: float = 0.0
    series: Optional[LedgerSeries] = None

    def total_loss(self) -> float:
        return self.e_cond + self.e_diode + self.e_gate + self.e_boot_recharge

    def conservation_residual(self) -> float:
        """e_in minus outputs, losses and the stored-energy delta."""
        return self.e_in - (sum(self.e_out) + self.total_loss()
                            + self.e_stored_final - self.e_stored_initial)


@dataclass
class Trace:
    """Sampled run history. Columns are parallel arrays, one row per sample.

    Rows are strictly increasing in time; a sample is recorded every
    sample_every steps and at every event. `selected` is the output index
    (-1 when none); during CHARGE it names the output the cycle serves.
    """

    spec: Optional[ConverterSpec]
    t: np.ndarray
    i_l: np.ndarray
    v_l_plus: np.ndarray
    v_boot_top: np.ndarray
    v_boot: np.ndarray
    phase: np.ndarray  # int8, Phase values
    selected: np.ndarray  # int32
    v_out: np.ndarray  # shape (n_samples, n_outputs)
    events: list[Event] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.t)

    @property
    def n_outputs(self) -> int:
        return self.v_out.shape[1]


def stored_energy(i_l: float, v_boot: float, v_out, spec: ConverterSpec) -> float:
    """Field energy in the inductor plus all capacitors."""
    e = 0.5 * spec.inductor.l * i_l * i_l
    e += 0.5 * spec.bootstrap.c_boot * v_boot * v_boot
    for k, out in enumerate(spec.outputs):
        e += 0.5 * out.c_out * v_out[k] * v_out[k]
    return e


# ---------------------------------------------------------------------------
# reference RK4 step

def _rk4_scalar_map(a: float, b: float, h: float) -> tuple[float, float]:
    """One-step RK4 map for y' = a y + b: returns (E, F) with y1 = E y0 + F."""
    z = a * h
    poly = 1.0 + z * (0.5 + z * (1.0 / 6.0 + z / 24.0))
    return 1.0 + z * poly, h * b * poly


def _rk4_map_2x2(a00, a01, a10, a11, b0, b1, h):
    """One-step RK4 map for a 2-state affine block; returns (m00..m11, c0, c1)."""
    h00 = h * a00
    h01 = h * a01
    h10 = h * a10
    h11 = h * a11
    p00 = h00 * h00 + h01 * h10
    p01 = h00 * h01 + h01 * h11
    p10 = h10 * h00 + h11 * h10
    p11 = h10 * h01 + h11 * h11
    q00 = p00 * h00 + p01 * h10
    q01 = p00 * h01 + p01 * h11
    q10 = p10 * h00 + p11 * h10
    q11 = p10 * h01 + p11 * h11
    r00 = q00 * h00 + q01 * h10
    r01 = q00 * h01 + q01 * h11
    r10 = q10 * h00 + q11 * h10
    r11 = q10 * h01 + q11 * h11
    m00 = 1.0 + h00 + p00 / 2.0 + q00 / 6.0 + r00 / 24.0
    m01 = h01 + p01 / 2.0 + q01 / 6.0 + r01 / 24.0
    m10 = h10 + p10 / 2.0 + q10 / 6.0 + r10 / 24.0
    m11 = 1.0 + h11 + p11 / 2.0 + q11 / 6.0 + r11 / 24.0
    w00 = 1.0 + h00 / 2.0 + p00 / 6.0 + q00 / 24.0
    w01 = h01 / 2.0 + p01 / 6.0 + q01 / 24.0
    w10 = h10 / 2.0 + p10 / 6.0 + q10 / 24.0
    w11 = 1.0 + h11 / 2.0 + p11 / 6.0 + q11 / 24.0
    c0 = h * (w00 * b0 + w01 * b1)
    c1 = h * (w10 * b0 + w11 * b1)
    return m00, m01, m10, m11, c0, c1


def step(state: CircuitState, spec: ConverterSpec, dt: float,
         ledger: Optional[EnergyLedger] = None) -> CircuitState:
    """One classical RK4 step holding the phase fixed.

    Reference implementation used by the tests and for verification; the
    production loop in `simulate` applies the mathematically identical
    affine one-step map. Passing a ledger accumulates the step's energy
    integrals trapezoidally.
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")

    def f(i_l, v_boot, v_out):
        s = replace(state, i_l=i_l, v_boot=v_boot, v_out=v_out)
        return derivative(s, spec)

    i0, vb0, vo0 = state.i_l, state.v_boot, state.v_out
    n = len(vo0)
    k1 = f(i0, vb0, vo0)
    k2 = f(i0 + 0.5 * dt * k1[0], vb0 + 0.5 * dt * k1[1],
           tuple(vo0[m] + 0.5 * dt * k1[2][m] for m in range(n)))
    k3 = f(i0 + 0.5 * dt * k2[0], vb0 + 0.5 * dt * k2[1],
           tuple(vo0[m] + 0.5 * dt * k2[2][m] for m in range(n)))
    k4 = f(i0 + dt * k3[0], vb0 + dt * k3[1],
           tuple(vo0[m] + dt * k3[2][m] for m in range(n)))
    i1 = i0 + dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
    vb1 = vb0 + dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
    vo1 = tuple(vo0[m] + dt / 6.0 * (k1[2][m] + 2.0 * k2[2][m]
                                     + 2.0 * k3[2][m] + k4[2][m])
                for m in range(n))

    for x in (i1, vb1, *vo1):
        if not math.isfinite(x):
            raise SimulationError(
                f"non-finite state after step from t={state.t!r} "
                f"(phase {state.phase.name})")

    new = replace(state, t=state.t + dt, i_l=i1, v_boot=vb1, v_out=vo1)
    if ledger is not None:
        _accumulate_trap(ledger, spec, state, new, dt)
    return new


def _accumulate_trap(ledger: EnergyLedger, spec: ConverterSpec,
                     s0: CircuitState, s1: CircuitState, dt: float) -> None:
    """Trapezoidal ledger update over one step (endpoint integrands)."""
    if not ledger.e_out:
        ledger.e_out = [0.0] * spec.n_outputs
    half = 0.5 * dt
    phase = s0.phase
    ind = spec.inductor
    if phase is not Phase.IDLE:
        ledger.e_in_main += spec.v_in * (s0.i_l + s1.i_l) * half
        if phase is Phase.CHARGE:
            r = spec.switch_sp.r_on + spec.switch_sy.r_on + ind.r_series
        else:
            r = (spec.switch_sp.r_on + ind.r_series
                 + 2.0 * spec.outputs[s0.selected].r_on_each)
        ledger.e_cond += r * (s0.i_l * s0.i_l + s1.i_l * s1.i_l) * half
    for k, out in enumerate(spec.outputs):
        p0 = s0.v_out[k] * out.load.current(s0.v_out[k])
        p1 = s1.v_out[k] * out.load.current(s1.v_out[k])
        ledger.e_out[k] += (p0 + p1) * half
    if phase is not Phase.DELIVER:
        bst = spec.bootstrap
        r_rec = bst.r_charge + bst.d_b.r_s
        for vb in (s0.v_boot, s1.v_boot):
            i_rech = max(0.0, (bst.v_drive - bst.d_b.v_f - vb) / r_rec)
            ledger.e_drive_in += bst.v_drive * i_rech * half
            ledger.e_diode += (bst.d_b.v_f + i_rech * bst.d_b.r_s) * i_rech * half
            ledger.e_boot_recharge += i_rech * i_rech * bst.r_charge * half
    ledger.e_in = ledger.e_in_main + ledger.e_drive_in


# ---------------------------------------------------------------------------
# event localization

def locate_event(f: Callable[[float], float], t0: float, t1: float) -> float:
    """Bisect a sign change of f over [t0, t1] to |f| <= 1e-12 * scale.

    The scale is the larger endpoint magnitude; iteration stops after 40
    halvings regardless. Raises if f does not change sign over the bracket.
    """
    f0 = f(t0)
    if f0 == 0.0:
        return t0
    f1 = f(t1)
    if f1 == 0.0:
        return t1
    if (f0 > 0.0) == (f1 > 0.0):
        raise ValueError(
            f"no sign change over [{t0!r}, {t1!r}]: f0={f0!r}, f1={f1!r}")
    tol = 1e-12 * max(abs(f0), abs(f1))
    a, b = t0, t1
    for _ in range(40):
        m = 0.5 * (a + b)
        fm = f(m)
        if abs(fm) <= tol:
            return m
        if (fm > 0.0) == (f0 > 0.0):
            a = m
        else:
            b = m
    return 0.5 * (a + b)


def _cross_linear(fa: float, fb: float, ta: float, tb: float) -> float:
    """Crossing time of the linearly interpolated signal over one step."""
    span = tb - ta
    if span <= 0.0 or fa == 0.0:
        return ta
    if (fa > 0.0) == (fb > 0.0) or fb == 0.0:
        return tb  # crossing lands on (or beyond) the step end
    return locate_event(lambda t: fa + (fb - fa) * (t - ta) / span, ta, tb)


# ---------------------------------------------------------------------------
# simulation

_END = "end"
_TINY_SPAN = 1e-30


class _Sim:
    """Mutable context for one simulate() run, unpacked for the hot loops."""

    def __init__(self, spec: ConverterSpec):
        problems = validate(spec)
        if problems:
            raise SimulationError(
                "spec failed validation: " + "; ".join(problems))
        self.spec = spec
        self.n = spec.n_outputs
        self.dt = spec.sim.dt
        self.t_end = spec.sim.t_end
        self.sample_every = spec.sim.sample_every

        self.v_in = spec.v_in
        self.l = spec.inductor.l
        r_l = spec.inductor.r_series
        self.r_sy = spec.switch_sy.r_on
        self.r_charge_path = spec.switch_sp.r_on + self.r_sy + r_l
        bst = spec.bootstrap
        self.c_boot = bst.c_boot
        self.v_star = nominal_boot_voltage(spec)
        self.r_rec = bst.r_charge + bst.d_b.r_s
        self.tau_boot = self.r_rec * self.c_boot
        self.v_f_b = bst.d_b.v_f
        self.r_s_b = bst.d_b.r_s
        self.r_charge = bst.r_charge
        self.v_drive = bst.v_drive
        self.e_boot_step = _rk4_scalar_map(-self.dt / self.tau_boot, 0.0, 1.0)[0]

        outs = spec.outputs
        self.comp = [o.target + o.hysteresis for o in outs]
        self.wake = [o.target - o.hysteresis for o in outs]
        self.c_out = [o.c_out for o in outs]
        self.i_load = [o.load.i_load for o in outs]
        self.v_floor = [o.load.v_floor for o in outs]
        self.slope = [o.load.i_load / o.c_out for o in outs]  # |dv/dt| on load
        self.g_floor = [o.load.i_load / (o.load.v_floor * o.c_out) for o in outs]
        self.e_floor_step = [_rk4_scalar_map(-self.dt * g, 0.0, 1.0)[0]
                             for g in self.g_floor]
        self.r_deliver = [spec.switch_sp.r_on + r_l + 2.0 * o.r_on_each
                          for o in outs]
        self.r_on_each = [o.r_on_each for o in outs]
        self.gate_k = [self.c_boot / (self.c_boot + o.c_gate) for o in outs]

        ctl = spec.controller
        self.i_pk = ctl.i_pk
        self.t_on_max = ctl.t_on_max
        self.t_dmax = ctl.t_deliver_max
        self.gate_thr = ctl.gate_threshold
        self.k_high = highest_target_index(spec)

        # dynamic state
        self.t = 0.0
        self.i_l = 0.0
        self.u_boot = 0.0  # v_star - v_boot, kept >= 0 by construction
        self.v = [0.0] * self.n
        self.phase = Phase.IDLE
        self.sel = -1
        self.ctrl = initial_controller_state(spec)
        self.drain_slot = False
        self.deliver_below = False  # served output under its load floor
        self.steps_done = 0
        self.next_sample_step = self.sample_every

        # ledger scalars
        self.e_in_main = 0.0
        self.e_drive = 0.0
        self.e_out = [0.0] * self.n
        self.e_cond = 0.0
        self.e_diode = 0.0
        self.e_gate = 0.0
        self.e_rech_r = 0.0

        # sample buffers
        self.rows_t: list[float] = []
        self.rows_i: list[float] = []
        self.rows_vlp: list[float] = []
        self.rows_vtop: list[float] = []
        self.rows_vb: list[float] = []
        self.rows_ph: list[int] = []
        self.rows_sel: list[int] = []
        self.rows_vout: list[tuple] = []
        self.ser: list[tuple] = []
        self.events: list[Event] = []

        self.timeout_streak = 0
        self.timeout_sel = -1

    # -- bookkeeping ---------------------------------------------------------

    def _state(self) -> CircuitState:
        return CircuitState(self.t, self.i_l, self.v_star - self.u_boot,
                            tuple(self.v), self.phase, self.sel)

    def _append_row(self, t, i_l, v_boot, vout) -> None:
        if self.rows_t and self.rows_t[-1] == t:
            for buf in (self.rows_t, self.rows_i, self.rows_vlp,
                        self.rows_vtop, self.rows_vb, self.rows_ph,
                        self.rows_sel, self.rows_vout, self.ser):
                buf.pop()
        if self.phase is Phase.DELIVER:
            vlp = vout[self.sel] + i_l * 2.0 * self.r_on_each[self.sel]
        elif self.phase is Phase.CHARGE:
            vlp = i_l * self.r_sy
        else:
            vlp = 0.0
        self.rows_t.append(t)
        self.rows_i.append(i_l)
        self.rows_vlp.append(vlp)
        self.rows_vtop.append(vlp + v_boot)
        self.rows_vb.append(v_boot)
        self.rows_ph.append(int(self.phase))
        self.rows_sel.append(self.sel)
        self.rows_vout.append(vout)
        self.ser.append((t, self.e_in_main + self.e_drive, sum(self.e_out),
                         self.e_cond, self.e_diode, self.e_gate, self.e_rech_r))

    def _sample(self) -> None:
        self._append_row(self.t, self.i_l, self.v_star - self.u_boot,
                         tuple(self.v))

    def _sample_mid(self, k_steps: int, t0: float) -> None:
        """Periodic sample inside a segment at self.t = t0 + k_steps * dt.

        The stepped block (if any) must already be written back to
        self.i_l / self.v; unserved outputs and the bootstrap are evaluated
        in place from their segment-start values.
        """
        t = self.t
        if self.phase is Phase.DELIVER:
            v_boot = self.v_star - self.u_boot
        else:
            v_boot = self.v_star - self._u_at(k_steps)
        vout = tuple(
            self.v[j] if (self.phase is Phase.DELIVER and j == self.sel)
            else self._bulk_value_at(j, k_steps, t - t0)
            for j in range(self.n))
        self._append_row(t, self.i_l, v_boot, vout)

    def _event(self, kind: str, index: int = -1, info: str = "") -> None:
        self.events.append(Event(self.t, kind, index, info))

    def _check_finite(self) -> None:
        ok = math.isfinite(self.i_l) and math.isfinite(self.u_boot)
        if ok:
            for x in self.v:
                if not math.isfinite(x):
                    ok = False
                    break
        if not ok:
            raise SimulationError(
                f"non-finite state at t={self.t!r}: i_l={self.i_l!r}, "
                f"v_out={self.v!r}, phase={self.phase.name}")

    def _bump_sample_cursor(self) -> None:
        while self.next_sample_step <= self.steps_done:
            self.next_sample_step += self.sample_every

    # -- bootstrap and unserved-output closed forms ---------------------------

    def _u_at(self, n_steps: int) -> float:
        u = self.u_boot
        return u * self.e_boot_step ** n_steps if (u > 0.0 and n_steps) else u

    def _advance_boot(self, n_steps: int, h_partial: float) -> None:
        """Recharge over a charge/idle span; endpoint-exact bookkeeping."""
        u0 = self.u_boot
        if u0 <= 0.0:
            self.u_boot = 0.0
            return
        u1 = self._u_at(n_steps)
        if h_partial > 0.0:
            u1 *= _rk4_scalar_map(-h_partial / self.tau_boot, 0.0, 1.0)[0]
        dq = self.c_boot * (u0 - u1)
        e_sq = 0.5 * self.c_boot * (u0 * u0 - u1 * u1)
        self.e_drive += self.v_drive * dq
        self.e_diode += self.v_f_b * dq + (self.r_s_b / self.r_rec) * e_sq
        self.e_rech_r += (self.r_charge / self.r_rec) * e_sq
        self.u_boot = u1

    def _bulk_value_at(self, j: int, k_steps: int, t_rel: float) -> float:
        """Unserved output j evaluated t_rel (k_steps) into the segment."""
        v0 = self.v[j]
        if self.i_load[j] == 0.0:
            return v0
        if v0 > self.v_floor[j]:
            return v0 - self.slope[j] * t_rel
        return v0 * self.e_floor_step[j] ** k_steps

    def _advance_bulk(self, j: int, n_steps: int, h_partial: float,
                      t_span: float) -> None:
        """Advance unserved output j over the segment and book its load energy."""
        v0 = self.v[j]
        if self.i_load[j] == 0.0:
            return
        if v0 > self.v_floor[j]:
            v1 = v0 - self.slope[j] * t_span
            self.e_out[j] += self.i_load[j] * 0.5 * (v0 + v1) * t_span
        else:
            v1 = v0 * self.e_floor_step[j] ** n_steps if n_steps else v0
            if h_partial > 0.0:
                v1 *= _rk4_scalar_map(-h_partial * self.g_floor[j], 0.0, 1.0)[0]
            self.e_out[j] += 0.5 * self.c_out[j] * (v0 * v0 - v1 * v1)
        self.v[j] = v1

    def _bulk_floor_cap(self, j: int) -> float:
        """Relative time at which unserved output j reaches its floor, or inf."""
        v0 = self.v[j]
        if self.i_load[j] == 0.0 or v0 <= self.v_floor[j]:
            return math.inf
        return (v0 - self.v_floor[j]) / self.slope[j]

    # -- segments --------------------------------------------------------------

    def _segment(self) -> str:
        if self.phase is Phase.DELIVER:
            return self._seg_deliver()
        if self.phase is Phase.CHARGE:
            return self._seg_charge()
        return self._seg_idle()

    def _finalize_span(self, t0: float, n_steps: int) -> float:
        """Partial-step length implied by the distance actually covered."""
        h = self.t - t0 - n_steps * self.dt
        return h if h > _TINY_SPAN else 0.0

    def _seg_charge(self) -> str:
        dt = self.dt
        while True:
            t0 = self.t
            cap = self.ctrl.t_phase_start + self.t_on_max
            reason = "charge_timeout"
            if self.t_end < cap:
                cap, reason = self.t_end, _END
            floor_j = -1
            for j in range(self.n):
                tc = self._bulk_floor_cap(j)
                if t0 + tc < cap:
                    cap, reason, floor_j = t0 + tc, "load_floor", j
            span = cap - t0
            if span <= _TINY_SPAN:
                self.t = cap
                return reason

            a = -self.r_charge_path / self.l
            b = self.v_in / self.l
            e_map, f_map = _rk4_scalar_map(a, b, dt)
            i = self.i_l
            ii = i * i
            s1 = s2 = p1 = p2 = 0.0
            i_pk = self.i_pk
            armed = i < i_pk * (1.0 - 1e-12)
            n_full = int(span / dt)
            base = self.steps_done
            nxt = self.next_sample_step
            hit = None

            k = 0
            while k < n_full:
                k += 1
                i1 = e_map * i + f_map
                if armed and i1 >= i_pk:
                    ta = t0 + (k - 1) * dt
                    t_ev = _cross_linear(i - i_pk, i1 - i_pk, ta, ta + dt)
                    h = t_ev - ta
                    if h > 0.0:
                        e_p, f_p = _rk4_scalar_map(a, b, h)
                        i_ev = e_p * i + f_p
                    else:
                        i_ev = i
                    p1 = (i + i_ev) * 0.5 * h
                    p2 = (ii + i_ev * i_ev) * 0.5 * h
                    i = i_ev
                    hit = ("peak_limit", t_ev)
                    break
                s1 += i + i1
                s2 += ii + i1 * i1
                i = i1
                ii = i1 * i1
                if base + k == nxt:
                    self.t = t0 + k * dt
                    self.i_l = i
                    self._sample_mid(k, t0)
                    nxt += self.sample_every

            if hit is not None:
                reason = hit[0]
                self.t = hit[1]
                n_steps = k - 1
            else:
                n_steps = n_full
                h = span - n_full * dt
                if h > _TINY_SPAN:
                    # the remainder step gets the same event check as full steps
                    e_p, f_p = _rk4_scalar_map(a, b, h)
                    i1 = e_p * i + f_p
                    ta = t0 + n_full * dt
                    if armed and i1 >= i_pk:
                        t_ev = _cross_linear(i - i_pk, i1 - i_pk, ta, ta + h)
                        h2 = t_ev - ta
                        if h2 > 0.0:
                            e_p, f_p = _rk4_scalar_map(a, b, h2)
                            i1 = e_p * i + f_p
                        else:
                            i1 = i
                        hit = ("peak_limit", t_ev)
                        reason = "peak_limit"
                        h = h2
                    p1 = (i + i1) * 0.5 * h
                    p2 = (ii + i1 * i1) * 0.5 * h
                    i = i1
                    k += 1
                self.t = hit[1] if hit is not None else cap

            self.steps_done = base + k
            self.next_sample_step = nxt
            self._bump_sample_cursor()
            self.i_l = i
            t_span = self.t - t0
            h_partial = self._finalize_span(t0, n_steps)
            self.e_in_main += self.v_in * (0.5 * dt * s1 + p1)
            self.e_cond += self.r_charge_path * (0.5 * dt * s2 + p2)
            self._advance_boot(n_steps, h_partial)
            for j in range(self.n):
                self._advance_bulk(j, n_steps, h_partial, t_span)
            self._check_finite()

            if reason == "load_floor":
                self.v[floor_j] = self.v_floor[floor_j]
                self._event("load_floor", floor_j, "discharged to load floor")
                self._sample()
                continue
            if reason == "peak_limit":
                self._event("peak_limit", self.ctrl.pending,
                            f"i_l reached {self.i_pk:g} A")
            elif reason == "charge_timeout":
                self._event("charge_timeout", self.ctrl.pending, "t_on_max")
            return reason

    def _seg_deliver(self) -> str:
        dt = self.dt
        while True:
            t0 = self.t
            j = self.sel
            cap = self.ctrl.t_phase_start + self.t_dmax
            reason = "deliver_timeout"
            if self.t_end < cap:
                cap, reason = self.t_end, _END
            floor_j = -1
            for m in range(self.n):
                if m == j:
                    continue
                tc = self._bulk_floor_cap(m)
                if t0 + tc < cap:
                    cap, reason, floor_j = t0 + tc, "load_floor", m
            span = cap - t0
            if span <= _TINY_SPAN:
                self.t = cap
                return reason

            below = self.deliver_below
            a00 = -self.r_deliver[j] / self.l
            a01 = -1.0 / self.l
            a10 = 1.0 / self.c_out[j]
            if below:
                a11 = -self.g_floor[j]
                b1 = 0.0
            else:
                a11 = 0.0
                b1 = -self.i_load[j] / self.c_out[j]
            b0 = self.v_in / self.l
            m00, m01, m10, m11, c0, c1 = _rk4_map_2x2(a00, a01, a10, a11,
                                                      b0, b1, dt)
            i = self.i_l
            v = self.v[j]
            ii = i * i
            s1 = s2 = sv = p1 = p2 = pv = 0.0
            i_pk = self.i_pk
            armed_peak = i < i_pk * (1.0 - 1e-12)
            armed_comp = not self.drain_slot
            comp = self.comp[j]
            floor_v = self.v_floor[j]
            n_full = int(span / dt)
            base = self.steps_done
            nxt = self.next_sample_step
            hit = None

            k = 0
            while k < n_full:
                k += 1
                i1 = m00 * i + m01 * v + c0
                v1 = m10 * i + m11 * v + c1
                ev = None
                if i > 0.0 and i1 <= 0.0:
                    ev, fa, fb = "current_zero", i, i1
                elif armed_peak and i1 >= i_pk:
                    ev, fa, fb = "peak_limit", i - i_pk, i1 - i_pk
                elif armed_comp and v1 >= comp:
                    ev, fa, fb = "comparator_trip", v - comp, v1 - comp
                elif (v1 > floor_v) if below else (v1 < floor_v):
                    ev, fa, fb = "floor_flip", v - floor_v, v1 - floor_v
                if ev is not None:
                    ta = t0 + (k - 1) * dt
                    t_ev = _cross_linear(fa, fb, ta, ta + dt)
                    h = t_ev - ta
                    if h > 0.0:
                        e0, e1, e2, e3, e4, e5 = _rk4_map_2x2(
                            a00, a01, a10, a11, b0, b1, h)
                        i_ev = e0 * i + e1 * v + e4
                        v_ev = e2 * i + e3 * v + e5
                    else:
                        i_ev, v_ev = i, v
                    if ev == "current_zero":
                        i_ev = 0.0  # reverse conduction blocked: exact clamp
                    p1 = (i + i_ev) * 0.5 * h
                    p2 = (ii + i_ev * i_ev) * 0.5 * h
                    pv = ((v * v + v_ev * v_ev) if below
                          else (v + v_ev)) * 0.5 * h
                    i, v = i_ev, v_ev
                    hit = (ev, t_ev)
                    break
                s1 += i + i1
                s2 += ii + i1 * i1
                sv += (v * v + v1 * v1) if below else (v + v1)
                i = i1
                v = v1
                ii = i1 * i1
                if base + k == nxt:
                    self.t = t0 + k * dt
                    self.i_l = i
                    self.v[j] = v
                    self._sample_mid(k, t0)
                    nxt += self.sample_every

            if hit is not None:
                reason = hit[0]
                self.t = hit[1]
                n_steps = k - 1
            else:
                n_steps = n_full
                h = span - n_full * dt
                if h > _TINY_SPAN:
                    # the remainder step gets the same event check as full steps
                    e0, e1, e2, e3, e4, e5 = _rk4_map_2x2(
                        a00, a01, a10, a11, b0, b1, h)
                    i1 = e0 * i + e1 * v + e4
                    v1 = e2 * i + e3 * v + e5
                    ev = None
                    if i > 0.0 and i1 <= 0.0:
                        ev, fa, fb = "current_zero", i, i1
                    elif armed_peak and i1 >= i_pk:
                        ev, fa, fb = "peak_limit", i - i_pk, i1 - i_pk
                    elif armed_comp and v1 >= comp:
                        ev, fa, fb = "comparator_trip", v - comp, v1 - comp
                    elif (v1 > floor_v) if below else (v1 < floor_v):
                        ev, fa, fb = "floor_flip", v - floor_v, v1 - floor_v
                    if ev is not None:
                        ta = t0 + n_full * dt
                        t_ev = _cross_linear(fa, fb, ta, ta + h)
                        h2 = t_ev - ta
                        if h2 > 0.0:
                            e0, e1, e2, e3, e4, e5 = _rk4_map_2x2(
                                a00, a01, a10, a11, b0, b1, h2)
                            i1 = e0 * i + e1 * v + e4
                            v1 = e2 * i + e3 * v + e5
                        else:
                            i1, v1 = i, v
                        if ev == "current_zero":
                            i1 = 0.0
                        hit = (ev, t_ev)
                        reason = ev
                        h = h2
                    p1 = (i + i1) * 0.5 * h
                    p2 = (ii + i1 * i1) * 0.5 * h
                    pv = ((v * v + v1 * v1) if below else (v + v1)) * 0.5 * h
                    i, v = i1, v1
                    k += 1
                self.t = hit[1] if hit is not None else cap

            self.steps_done = base + k
            self.next_sample_step = nxt
            self._bump_sample_cursor()
            self.i_l = i
            self.v[j] = v
            t_span = self.t - t0
            h_partial = self._finalize_span(t0, n_steps)
            self.e_in_main += self.v_in * (0.5 * dt * s1 + p1)
            self.e_cond += self.r_deliver[j] * (0.5 * dt * s2 + p2)
            if below:
                self.e_out[j] += (self.i_load[j] / floor_v) * (0.5 * dt * sv + pv)
            else:
                self.e_out[j] += self.i_load[j] * (0.5 * dt * sv + pv)
            for m in range(self.n):
                if m != j:
                    self._advance_bulk(m, n_steps, h_partial, t_span)
            self._check_finite()

            if reason == "floor_flip":
                self.v[j] = floor_v
                self.deliver_below = not below
                self._event("load_floor", j, "served output crossed the floor")
                self._sample()
                continue
            if reason == "load_floor":
                self.v[floor_j] = self.v_floor[floor_j]
                self._event("load_floor", floor_j, "discharged to load floor")
                self._sample()
                continue
            if reason == "current_zero":
                self._event("current_zero", j, "inductor current clamped to 0")
            elif reason == "peak_limit":
                self._event("peak_limit", j, f"i_l reached {self.i_pk:g} A")
            elif reason == "comparator_trip":
                self._event("comparator_trip", j,
                            f"v_out[{j}] reached target + hysteresis")
            elif reason == "deliver_timeout":
                self._event("deliver_timeout", j, "t_deliver_max")
            return reason

    def _seg_idle(self) -> str:
        dt = self.dt
        while True:
            t0 = self.t
            cap = self.t_end
            reason = _END
            idx = -1
            for j in range(self.n):
                if self.i_load[j] == 0.0:
                    continue
                v0 = self.v[j]
                wake = self.wake[j]
                floor_v = self.v_floor[j]
                if v0 > floor_v:
                    if wake < floor_v:
                        t_cand = t0 + (v0 - floor_v) / self.slope[j]
                        kind = "load_floor"
                    else:
                        t_rel = (v0 - wake) / self.slope[j] if v0 > wake else 0.0
                        n_steps = max(int(math.ceil(t_rel / dt - 1e-12)), 1)
                        t_cand = t0 + n_steps * dt
                        kind = "wake"
                else:
                    if v0 <= wake:
                        t_cand = t0 + dt
                    elif wake <= 0.0:
                        continue
                    else:
                        t_rel = math.log(v0 / wake) / self.g_floor[j]
                        n_steps = max(int(math.ceil(t_rel / dt - 1e-12)), 1)
                        t_cand = t0 + n_steps * dt
                    kind = "wake"
                if t_cand < cap:
                    cap, reason, idx = t_cand, kind, j
            span = cap - t0
            if span <= _TINY_SPAN:
                self.t = cap
                return reason

            n_full = int(span / dt)
            h_partial = span - n_full * dt
            if h_partial <= _TINY_SPAN:
                h_partial = 0.0
            base = self.steps_done
            while self.next_sample_step <= base + n_full:
                k = self.next_sample_step - base
                self.t = t0 + k * dt
                self._sample_mid(k, t0)
                self.next_sample_step += self.sample_every
            self.t = cap
            self.steps_done = base + n_full + (1 if h_partial > 0.0 else 0)
            self._bump_sample_cursor()
            self._advance_boot(n_full, h_partial)
            for j in range(self.n):
                self._advance_bulk(j, n_full, h_partial, span)
            self._check_finite()

            if reason == "load_floor":
                self.v[idx] = self.v_floor[idx]
                self._event("load_floor", idx, "discharged to load floor")
                self._sample()
                continue
            if reason == "wake":
                self._event("wake", idx,
                            f"v_out[{idx}] below target - hysteresis")
            return reason

    # -- transitions -------------------------------------------------------------

    def _apply_action(self) -> None:
        if self.i_l < 0.0:
            # interpolation residue from a located event; real reverse flow
            # cannot occur (zero-crossings are clamped at every step width)
            if self.i_l < -1e-9:
                raise SimulationError(
                    f"inductor current went negative at t={self.t!r}: "
                    f"{self.i_l!r} A (engine invariant violated)")
            self.i_l = 0.0
        prev_phase = self.phase
        prev_sel = self.sel
        new_phase, new_sel, self.ctrl = next_action(self.ctrl, self._state(),
                                                    self.spec)
        self.drain_slot = (prev_phase is Phase.DELIVER
                           and new_phase is Phase.DELIVER
                           and self.i_l > RESIDUAL_EPS)
        turn_on = (new_phase is Phase.DELIVER
                   and (prev_phase is not Phase.DELIVER or new_sel != prev_sel))
        changed = new_phase is not prev_phase or new_sel != prev_sel
        self.phase = new_phase
        self.sel = new_sel
        if new_phase is Phase.DELIVER and (turn_on or prev_sel != new_sel):
            self.deliver_below = self.v[new_sel] < self.v_floor[new_sel]
        if changed:
            tags = {Phase.CHARGE: "C", Phase.DELIVER: "D", Phase.IDLE: "I"}
            src = tags[prev_phase] + (f"[{prev_sel}]" if prev_sel >= 0 else "")
            dst = tags[new_phase] + (f"[{new_sel}]" if new_sel >= 0 else "")
            self._event("phase_change", new_sel, f"{src}->{dst}")
        if turn_on:
            self._gate_event(new_sel)

    def _gate_event(self, j: int) -> None:
        """Charge-share the gate of pair j out of the bootstrap capacitor."""
        kf = self.gate_k[j]
        v0 = self.v_star - self.u_boot
        v1 = v0 * kf
        self.e_gate += 0.5 * self.c_boot * (v0 * v0 - v1 * v1)
        self.u_boot = self.v_star - v1
        overdrive = v1 + self.i_l * self.r_on_each[j]
        if overdrive < self.gate_thr:
            self._event("gate_underdrive", j,
                        f"overdrive {overdrive:.3f} V below threshold "
                        f"{self.gate_thr:.3f} V")

    def _note_timeout(self, reason: str) -> None:
        if reason == "deliver_timeout":
            if self.sel == self.timeout_sel:
                self.timeout_streak += 1
            else:
                self.timeout_sel = self.sel
                self.timeout_streak = 1
            if self.timeout_streak == 3:
                self._event("warning", self.sel,
                            "t_deliver_max exceeded repeatedly without "
                            "regulation progress")
        else:
            self.timeout_streak = 0
            self.timeout_sel = -1

    # -- main loop ----------------------------------------------------------------

    def run(self) -> tuple[Trace, EnergyLedger]:
        e_stored_0 = stored_energy(0.0, self.v_star, self.v, self.spec)
        self._apply_action()
        self._sample()
        guard = self.dt * 1e-9
        while self.t_end - self.t > guard:
            reason = self._segment()
            if reason == _END:
                break
            self._note_timeout(reason)
            self._apply_action()
            self._sample()
        self.t = self.t_end
        self._sample()
        return self._finish(e_stored_0)

    def _finish(self, e_stored_0: float) -> tuple[Trace, EnergyLedger]:
        trace = Trace(
            spec=self.spec,
            t=np.asarray(self.rows_t, dtype=float),
            i_l=np.asarray(self.rows_i, dtype=float),
            v_l_plus=np.asarray(self.rows_vlp, dtype=float),
            v_boot_top=np.asarray(self.rows_vtop, dtype=float),
            v_boot=np.asarray(self.rows_vb, dtype=float),
            phase=np.asarray(self.rows_ph, dtype=np.int8),
            selected=np.asarray(self.rows_sel, dtype=np.int32),
            v_out=np.asarray(self.rows_vout, dtype=float),
            events=self.events,
        )
        ser = np.asarray(self.ser, dtype=float)
        series = LedgerSeries(t=ser[:, 0], e_in=ser[:, 1], e_out_sum=ser[:, 2],
                              e_cond=ser[:, 3], e_diode=ser[:, 4],
                              e_gate=ser[:, 5], e_boot_recharge=ser[:, 6])
        ledger = EnergyLedger(
            e_in=self.e_in_main + self.e_drive,
            e_in_main=self.e_in_main,
            e_drive_in=self.e_drive,
            e_out=list(self.e_out),
            e_cond=self.e_cond,
            e_diode=self.e_diode,
            e_gate=self.e_gate,
            e_boot_recharge=self.e_rech_r,
            e_stored_initial=e_stored_0,
            e_stored_final=stored_energy(self.i_l, self.v_star - self.u_boot,
                                         self.v, self.spec),
            series=series,
        )
        return trace, ledger


def simulate(spec: ConverterSpec) -> tuple[Trace, EnergyLedger]:
    """Run a cold-start transient: v_out = 0, i_l = 0, bootstrap cap full.

    Returns the sampled trace and the energy ledger. Raises SimulationError
    if the spec fails validation or the state goes non-finite.
    """
    return _Sim(spec).run()
