"""Peak-current PFM regulation state machine.

One inductor is time-multiplexed across the outputs. Each service is one
pulse: build inductor current, dump it into the selected output, let the
current return to zero (discontinuous conduction). Under-regulated outputs
(hysteretic comparators) are picked round-robin.

Two rules keep the trace peak pinned at the configured limit:

* An output sitting above the charge-first threshold (input voltage minus
  the i_pk resistive drop of its delivery path) gets a CHARGE phase first;
  entering delivery at i_pk then guarantees a non-increasing current.
* An output below that threshold is served by delivering directly from
  zero current: the input ramps the inductor through the output, and the
  slot ends when the current reaches i_pk, the comparator trips, or the
  slot times out.

Residual current at a slot end is steered into the highest-target output
(the one able to ramp the current back down once charged) until it reaches
zero; only then does arbitration resume.

`next_action` is a pure function of (controller state, circuit state,
spec); identical inputs always produce the identical action.
"""

from __future__ import annotations

from dataclasses import dataclass

from .dynamics import CircuitState, Phase
from .model import ConverterSpec


# Residual current below this is treated as zero by the arbitration logic;
# the engine clamps located zero-crossings to exactly 0.0 anyway.
RESIDUAL_EPS = 1e-15


@dataclass(frozen=True)
class ControllerState:
    mode: Phase  # phase the controller believes is running
    rr_index: int  # round-robin cursor: next scan starts here
    t_phase_start: float  # when the current phase/slot began (s)
    pending: int  # output being charged for / delivered to; -1 when idle


def initial_controller_state(spec: ConverterSpec) -> ControllerState:
    return ControllerState(Phase.IDLE, spec.controller.arbitration_start, 0.0, -1)


def needs_service(state: CircuitState, spec: ConverterSpec, j: int) -> bool:
    """Hysteretic comparator: true once v_out[j] sags below target - hysteresis."""
    out = spec.outputs[j]
    return state.v_out[j] < out.target - out.hysteresis


def select_round_robin(ctrl: ControllerState, state: CircuitState,
                       spec: ConverterSpec) -> int:
    """First output needing service scanning from the round-robin cursor, or -1."""
    n = spec.n_outputs
    for k in range(n):
        j = (ctrl.rr_index + k) % n
        if needs_service(state, spec, j):
            return j
    return -1


def highest_target_index(spec: ConverterSpec) -> int:
    """Drain target for residual current; ties break toward the lower index."""
    best = 0
    for j in range(1, spec.n_outputs):
        if spec.outputs[j].target > spec.outputs[best].target:
            best = j
    return best


def charge_first_threshold(spec: ConverterSpec, j: int) -> float:
    """Output level above which a full charge phase is safe for output j.

    At or above this level the delivery-path derivative at i_pk is
    non-positive, so a slot entered at i_pk can only ramp down and the
    trace peak stays at the configured limit.
    """
    r_path = (spec.switch_sp.r_on + spec.inductor.r_series
              + 2.0 * spec.outputs[j].r_on_each)
    return spec.v_in - spec.controller.i_pk * r_path


def next_action(ctrl: ControllerState, state: CircuitState,
                spec: ConverterSpec) -> tuple[Phase, int, ControllerState]:
    """Decide the next phase at a phase boundary.

    Returns (phase, selected output or -1, successor controller state).
    Exactly one of S_y / output pairs is commanded on in every phase, so
    mutual exclusion holds by construction.
    """
    t = state.t

    if ctrl.mode is Phase.CHARGE:
        # charge ended (peak or timeout): dump into the output it was built for
        j = ctrl.pending
        return Phase.DELIVER, j, ControllerState(Phase.DELIVER, ctrl.rr_index, t, j)

    if ctrl.mode is Phase.DELIVER and state.i_l > RESIDUAL_EPS:
        # comparator / peak / timeout with current still flowing: drain it
        k = highest_target_index(spec)
        return Phase.DELIVER, k, ControllerState(Phase.DELIVER, ctrl.rr_index, t, k)

    j = select_round_robin(ctrl, state, spec)
    if j < 0:
        return Phase.IDLE, -1, ControllerState(Phase.IDLE, ctrl.rr_index, t, -1)

    rr = (j + 1) % spec.n_outputs
    if state.v_out[j] >= charge_first_threshold(spec, j):
        return Phase.CHARGE, j, ControllerState(Phase.CHARGE, rr, t, j)
    return Phase.DELIVER, j, ControllerState(Phase.DELIVER, rr, t, j)
