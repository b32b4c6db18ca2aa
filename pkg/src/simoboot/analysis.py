"""Post-run metrics: ripple, peak current, efficiency, bootstrap tracking,
and the gate-drive cost comparison.

Steady-state quantities default to the trailing 20% of the run so that the
cold-start transient (inrush into discharged output capacitors) does not
pollute them; the window is a parameter everywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dynamics import Phase
from .engine import EnergyLedger, Trace
from .model import ConverterSpec, nominal_boot_voltage


@dataclass(frozen=True)
class GateDriveCost:
    """Bootstrap capacitor / pad budget for n outputs, shared vs per-output."""

    n: int
    conventional_caps: int
    conventional_pads: int
    proposed_caps: int
    proposed_pads: int
    pads_saved: int
    offchip_cap_ratio: float


def gate_drive_cost(n: int) -> GateDriveCost:
    """Conventional design: one cap and two pads per output. Shared: one of each."""
    if n < 1:
        raise ValueError(f"output count must be >= 1, got {n!r}")
    return GateDriveCost(
        n=n,
        conventional_caps=n,
        conventional_pads=2 * n,
        proposed_caps=1,
        proposed_pads=1,
        pads_saved=2 * n - 1,
        offchip_cap_ratio=float(n),
    )


def _window_slice(trace: Trace, window: float) -> slice:
    if not 0.0 < window <= 1.0:
        raise ValueError(f"window must be in (0, 1], got {window!r}")
    if len(trace) == 0:
        raise ValueError("empty trace")
    t_end = trace.t[-1]
    t_from = t_end - window * (t_end - trace.t[0])
    lo = int(np.searchsorted(trace.t, t_from, side="left"))
    return slice(min(lo, len(trace) - 1), len(trace))


def ripple(trace: Trace, j: int, window: float = 0.2) -> float:
    """Peak-to-peak excursion of v_out[j] over the trailing window."""
    sl = _window_slice(trace, window)
    col = trace.v_out[sl, j]
    return float(col.max() - col.min())


def output_mean(trace: Trace, j: int, window: float = 0.2) -> float:
    sl = _window_slice(trace, window)
    return float(trace.v_out[sl, j].mean())


def is_regulated(trace: Trace, j: int, target: float, window: float = 0.2) -> bool:
    """Windowed mean within 10% of the target."""
    return abs(output_mean(trace, j, window) - target) <= 0.1 * target


def peak_current(trace: Trace, window: float = 1.0) -> float:
    """Largest sampled inductor current; event samples capture the true peak."""
    if len(trace) == 0:
        raise ValueError("empty trace")
    sl = _window_slice(trace, window)
    return float(trace.i_l[sl].max())


def efficiency(ledger: EnergyLedger, window: Optional[tuple[float, float]] = None
               ) -> tuple[float, float]:
    """(loss-ledger efficiency, gross efficiency) over a time window.

    The loss-ledger form e_out / (e_out + losses) is immune to the stored
    energy still sitting in the reactive elements at the window edges; the
    gross form e_out / e_in is reported alongside. A window of None means
    the whole run. Returns NaN when no input energy flowed.
    """
    if window is None:
        e_out = sum(ledger.e_out)
        e_loss = ledger.total_loss()
        e_in = ledger.e_in
    else:
        if ledger.series is None:
            raise ValueError("ledger carries no cumulative series")
        t0, t1 = window
        s = ledger.series
        lo = int(np.searchsorted(s.t, t0, side="left"))
        hi = int(np.searchsorted(s.t, t1, side="right")) - 1
        lo = min(max(lo, 0), len(s.t) - 1)
        hi = min(max(hi, lo), len(s.t) - 1)
        e_out = float(s.e_out_sum[hi] - s.e_out_sum[lo])
        e_loss = float((s.e_cond[hi] - s.e_cond[lo])
                       + (s.e_diode[hi] - s.e_diode[lo])
                       + (s.e_gate[hi] - s.e_gate[lo])
                       + (s.e_boot_recharge[hi] - s.e_boot_recharge[lo]))
        e_in = float(s.e_in[hi] - s.e_in[lo])
    eta = e_out / (e_out + e_loss) if e_out + e_loss > 0.0 else math.nan
    eta_gross = e_out / e_in if e_in > 0.0 else math.nan
    return eta, eta_gross


@dataclass(frozen=True)
class TrackingReport:
    """How faithfully the bootstrap top plate rides the selected output."""

    deviation_max: float  # max |v_boot_top - v_out[sel] - v_boot| over DELIVER
    bound_margin: float   # max (deviation - i_l * 2 r_on); <= 0 means bound held
    droop_max: float      # max |v_boot - nominal| over DELIVER samples
    v_c_nominal: float
    n_deliver_samples: int


def verify_tracking(trace: Trace, spec: Optional[ConverterSpec] = None,
                    window: float = 1.0) -> TrackingReport:
    """Check the top-plate law against every DELIVER sample in the window."""
    spec = spec or trace.spec
    if spec is None:
        raise ValueError("tracking verification needs the converter spec")
    sl = _window_slice(trace, window)
    phase = trace.phase[sl]
    mask = phase == int(Phase.DELIVER)
    if not mask.any():
        raise ValueError("trace contains no DELIVER samples in the window")
    sel = trace.selected[sl][mask]
    v_sel = trace.v_out[sl][mask, :][np.arange(int(mask.sum())), sel]
    dev = np.abs(trace.v_boot_top[sl][mask] - v_sel - trace.v_boot[sl][mask])
    r_on = np.asarray([o.r_on_each for o in spec.outputs])
    bound = trace.i_l[sl][mask] * 2.0 * r_on[sel]
    nominal = nominal_boot_voltage(spec)
    droop = np.abs(trace.v_boot[sl][mask] - nominal)
    return TrackingReport(
        deviation_max=float(dev.max()),
        bound_margin=float((dev - bound).max()),
        droop_max=float(droop.max()),
        v_c_nominal=nominal,
        n_deliver_samples=int(mask.sum()),
    )


def service_rates(trace: Trace, window: float = 0.2) -> list[float]:
    """Output-switch turn-ons per second, per output, over the window."""
    if trace.spec is None:
        n = trace.n_outputs
    else:
        n = trace.spec.n_outputs
    t_end = trace.t[-1]
    t_from = t_end - window * (t_end - trace.t[0])
    duration = t_end - t_from
    counts = [0] * n
    for ev in trace.events:
        if ev.kind == "phase_change" and ev.t >= t_from and ev.index >= 0:
            if ev.info.endswith(f"D[{ev.index}]"):
                counts[ev.index] += 1
    if duration <= 0.0:
        return [math.nan] * n
    return [c / duration for c in counts]


@dataclass(frozen=True)
class Metrics:
    """Bundle of per-run figures of merit (window-based where it matters)."""

    window: tuple[float, float]
    ripple: tuple[float, ...]  # per output, V
    mean: tuple[float, ...]  # per output, V
    regulated: tuple[bool, ...]
    i_l_peak: float  # over the full trace, A
    i_l_peak_window: float  # over the steady window, A
    efficiency: float  # e_out / (e_out + losses) over the window
    efficiency_gross: float  # e_out / e_in over the window
    losses: dict[str, float]  # windowed loss breakdown, J
    tracking_error_max: float
    boot_droop_max: float
    service_rate: tuple[float, ...]  # Hz per output


def compute_metrics(trace: Trace, ledger: EnergyLedger,
                    window: float = 0.2) -> Metrics:
    spec = trace.spec
    if spec is None:
        raise ValueError("metrics need the converter spec on the trace")
    n = spec.n_outputs
    t_end = trace.t[-1]
    t_from = t_end - window * (t_end - trace.t[0])
    eta, eta_gross = efficiency(ledger, (t_from, t_end))
    s = ledger.series
    lo = int(np.searchsorted(s.t, t_from, side="left"))
    lo = min(max(lo, 0), len(s.t) - 1)
    losses = {
        "e_cond": float(s.e_cond[-1] - s.e_cond[lo]),
        "e_diode": float(s.e_diode[-1] - s.e_diode[lo]),
        "e_gate": float(s.e_gate[-1] - s.e_gate[lo]),
        "e_boot_recharge": float(s.e_boot_recharge[-1] - s.e_boot_recharge[lo]),
    }
    try:
        tracking = verify_tracking(trace, spec)
        dev, droop = tracking.deviation_max, tracking.droop_max
    except ValueError:
        dev, droop = math.nan, math.nan
    return Metrics(
        window=(float(t_from), float(t_end)),
        ripple=tuple(ripple(trace, j, window) for j in range(n)),
        mean=tuple(output_mean(trace, j, window) for j in range(n)),
        regulated=tuple(is_regulated(trace, j, spec.outputs[j].target, window)
                        for j in range(n)),
        i_l_peak=peak_current(trace),
        i_l_peak_window=peak_current(trace, window),
        efficiency=eta,
        efficiency_gross=eta_gross,
        losses=losses,
        tracking_error_max=dev,
        boot_droop_max=droop,
        service_rate=tuple(service_rates(trace, window)),
    )
