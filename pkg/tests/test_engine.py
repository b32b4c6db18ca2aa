import math
from dataclasses import replace

import numpy as np
import pytest

from simoboot import (CircuitState, EnergyLedger, Phase, SimulationError,
                      analytic_rl_segment, locate_event, nominal_boot_voltage,
                      simulate, step)
from simoboot.engine import _rk4_map_2x2, _rk4_scalar_map

from conftest import make_output, make_spec


class TestLocateEvent:
    def test_symmetric_linear_crossing_is_the_midpoint(self):
        t = locate_event(lambda x: 1.0 - 2.0 * x, 0.0, 1.0)
        assert t == pytest.approx(0.5, abs=1e-12)

    def test_asymmetric_linear_crossing(self):
        # +3 at t0, -1 at t0+dt: root of the interpolant at 0.75 dt
        dt = 1e-9
        t = locate_event(lambda x: 3.0 - 4.0 * (x / dt), 0.0, dt)
        assert t == pytest.approx(0.75 * dt, rel=1e-9)

    def test_exponential_crossing_matches_closed_form_inversion(self):
        i0, v, r, l, i_pk = 0.0, 3.7, 0.09, 4.7e-6, 0.135
        f = lambda t: analytic_rl_segment(i0, v, r, l, t) - i_pk
        # closed form: i_inf + (i0 - i_inf) exp(-t/tau) = i_pk
        i_inf = v / r
        t_star = -(l / r) * math.log((i_pk - i_inf) / (i0 - i_inf))
        located = locate_event(f, 0.0, 4e-7)
        assert abs(located - t_star) <= 1e-12

    def test_no_sign_change_is_a_precondition_violation(self):
        with pytest.raises(ValueError):
            locate_event(lambda x: 1.0 + x, 0.0, 1.0)

    def test_endpoint_roots_are_returned_directly(self):
        assert locate_event(lambda x: x, 0.0, 1.0) == 0.0
        assert locate_event(lambda x: x - 1.0, 0.0, 1.0) == 1.0


def charge_state(spec, i_l=0.0, v_boot=None, v_out=None):
    if v_boot is None:
        v_boot = nominal_boot_voltage(spec)
    if v_out is None:
        v_out = (0.0,) * spec.n_outputs
    return CircuitState(t=0.0, i_l=i_l, v_boot=v_boot, v_out=v_out,
                        phase=Phase.CHARGE, selected=0)


class TestStep:
    def test_ideal_charge_ramp_is_exact(self):
        spec = make_spec(r_sp=0.0, r_sy=0.0, r_series=0.0,
                         outputs=(make_output(i_load=0.0),))
        s1 = step(charge_state(spec), spec, 1e-9)
        oracle = analytic_rl_segment(0.0, 3.7, 0.0, 4.7e-6, 1e-9)
        assert s1.i_l == pytest.approx(oracle, rel=1e-12)
        assert s1.i_l == pytest.approx(7.872340425531915e-4, rel=1e-12)

    def test_resistive_charge_tracks_the_oracle_over_a_segment(self):
        spec = make_spec(r_sp=0.02, r_sy=0.02, r_series=0.05,
                         outputs=(make_output(i_load=0.0),))
        r_tot = 0.09
        tau = spec.inductor.l / r_tot
        dt = tau / 1000.0
        s = charge_state(spec)
        for _ in range(1000):
            s = step(s, spec, dt)
        oracle = analytic_rl_segment(0.0, 3.7, r_tot, spec.inductor.l, tau)
        assert s.i_l == pytest.approx(oracle, rel=1e-10)

    def test_deliver_tracks_the_oracle_when_the_output_is_stiff(self):
        # a huge output capacitor freezes v_out, matching the constant
        # drive assumption of the closed form
        spec = make_spec(r_sp=0.02, r_series=0.05,
                         outputs=(make_output(target=12.0, c_out=1e6,
                                              i_load=0.0, r_on_each=0.2),))
        r_tot = 0.02 + 0.05 + 0.4
        tau = spec.inductor.l / r_tot
        dt = tau / 1000.0
        s = CircuitState(t=0.0, i_l=0.135, v_boot=5.0, v_out=(12.0,),
                         phase=Phase.DELIVER, selected=0)
        for _ in range(50):
            s = step(s, spec, dt)
        oracle = analytic_rl_segment(0.135, 3.7 - 12.0, r_tot,
                                     spec.inductor.l, 50 * dt)
        assert s.i_l == pytest.approx(oracle, rel=1e-10)

    def test_idle_with_zero_loads_only_advances_time(self):
        spec = make_spec(outputs=(make_output(i_load=0.0),))
        s0 = CircuitState(t=1.0, i_l=0.0, v_boot=5.0, v_out=(3.3,),
                          phase=Phase.IDLE, selected=-1)
        s1 = step(s0, spec, 1e-9)
        assert s1.t == 1.0 + 1e-9
        assert (s1.i_l, s1.v_boot, s1.v_out) == (0.0, 5.0, (3.3,))

    def test_ledger_accumulates_input_energy(self):
        spec = make_spec()
        ledger = EnergyLedger()
        s = charge_state(spec)
        for _ in range(10):
            s = step(s, spec, 1e-9, ledger)
        assert ledger.e_in_main > 0.0
        assert ledger.e_in == ledger.e_in_main + ledger.e_drive_in

    def test_nonfinite_state_aborts_with_diagnostic(self):
        spec = make_spec()
        s = charge_state(spec, i_l=1e308)
        with pytest.raises(SimulationError):
            step(replace(s, i_l=float("inf")), spec, 1e-9)


class TestAffineMapsMatchStep:
    """The production one-step maps are RK4 exactly, not an approximation."""

    def test_scalar_map_reproduces_rk4_on_charge(self):
        spec = make_spec(outputs=(make_output(i_load=0.0),))
        r = 0.09
        a = -r / spec.inductor.l
        b = spec.v_in / spec.inductor.l
        e, f = _rk4_scalar_map(a, b, 4e-9)
        for i0 in (0.0, 0.05, 0.135):
            ref = step(charge_state(spec, i_l=i0,
                                    v_boot=spec.bootstrap.v_drive - 0.3),
                       spec, 4e-9)
            assert e * i0 + f == pytest.approx(ref.i_l, rel=1e-14)

    def test_2x2_map_reproduces_rk4_on_deliver(self):
        spec = make_spec()
        out = spec.outputs[0]
        l = spec.inductor.l
        r_d = 0.02 + 0.05 + 2 * out.r_on_each
        a00, a01 = -r_d / l, -1.0 / l
        a10, a11 = 1.0 / out.c_out, 0.0
        b0, b1 = spec.v_in / l, -out.load.i_load / out.c_out
        m = _rk4_map_2x2(a00, a01, a10, a11, b0, b1, 4e-9)
        rng = np.random.default_rng(3)
        for _ in range(25):
            i0 = float(rng.uniform(0.0, 0.2))
            v0 = float(rng.uniform(0.2, 12.0))
            ref = step(CircuitState(0.0, i0, 5.0, (v0,), Phase.DELIVER, 0),
                       spec, 4e-9)
            i1 = m[0] * i0 + m[1] * v0 + m[4]
            v1 = m[2] * i0 + m[3] * v0 + m[5]
            assert i1 == pytest.approx(ref.i_l, rel=1e-13, abs=1e-18)
            assert v1 == pytest.approx(ref.v_out[0], rel=1e-13)


class TestSimulate:
    def test_rejects_an_invalid_spec(self):
        bad = make_spec(l=-1.0)
        with pytest.raises(SimulationError, match="inductor.l"):
            simulate(bad)

    def test_trace_structure(self, small_spec):
        trace, ledger = simulate(small_spec)
        assert len(trace) > 10
        assert np.all(np.diff(trace.t) > 0.0), "samples strictly increasing"
        assert trace.t[0] == 0.0 and trace.t[-1] == small_spec.sim.t_end
        assert np.all(trace.i_l >= 0.0)
        assert np.all(trace.v_boot >= 0.0)
        assert np.all(trace.v_boot <= small_spec.bootstrap.v_drive)
        assert np.all(trace.v_out >= 0.0)
        np.testing.assert_allclose(trace.v_boot_top - trace.v_l_plus,
                                   trace.v_boot, rtol=0, atol=1e-12)

    def test_every_phase_change_has_a_matching_event(self, small_spec):
        trace, _ = simulate(small_spec)
        change_times = {ev.t for ev in trace.events
                        if ev.kind == "phase_change"}
        flips = np.nonzero(np.diff(trace.phase) != 0)[0]
        for idx in flips:
            assert trace.t[idx + 1] in change_times

    def test_zero_crossings_clamp_exactly(self, small_spec):
        trace, _ = simulate(small_spec)
        zeros = [ev for ev in trace.events if ev.kind == "current_zero"]
        assert zeros, "expected DCM zero-cross events"
        t_to_i = dict(zip(trace.t.tolist(), trace.i_l.tolist()))
        for ev in zeros:
            assert t_to_i[ev.t] == 0.0

    def test_boot_voltage_is_monotone_by_phase(self, small_spec):
        trace, _ = simulate(small_spec)
        ph = trace.phase
        vb = trace.v_boot
        same = ph[:-1] == ph[1:]
        deliver = same & (ph[:-1] == int(Phase.DELIVER))
        recharge = same & (ph[:-1] != int(Phase.DELIVER))
        assert np.all(vb[1:][deliver] <= vb[:-1][deliver] + 1e-15)
        assert np.all(vb[1:][recharge] >= vb[:-1][recharge] - 1e-15)

    def test_energy_conservation(self, small_spec):
        trace, ledger = simulate(small_spec)
        assert abs(ledger.conservation_residual()) <= 1e-3 * ledger.e_in

    def test_determinism_bit_identical(self, small_spec):
        t1, l1 = simulate(small_spec)
        t2, l2 = simulate(small_spec)
        assert np.array_equal(t1.t, t2.t)
        assert np.array_equal(t1.i_l, t2.i_l)
        assert np.array_equal(t1.v_out, t2.v_out)
        assert np.array_equal(t1.v_boot, t2.v_boot)
        assert l1.e_in == l2.e_in
        assert [e.t for e in t1.events] == [e.t for e in t2.events]

    def test_initial_gate_event_draws_from_the_bootstrap_cap(self, small_spec):
        trace, ledger = simulate(small_spec)
        # cold start delivers immediately; the first sample already shows
        # the charge-sharing dip on the bootstrap cap
        k = 100e-9 / (100e-9 + 20e-12)
        assert trace.v_boot[0] == pytest.approx(5.0 * k, rel=1e-12)
        assert ledger.e_gate > 0.0

    def test_regulates_the_single_boost_output(self):
        spec = make_spec(outputs=(make_output(c_out=2.2e-6),), t_end=2e-3)
        trace, _ = simulate(spec)
        tail = trace.v_out[trace.t > 1.6e-3, 0]
        assert abs(tail.mean() - 12.0) < 0.05

    def test_charge_segment_matches_the_analytic_oracle(self, small_spec):
        spec = replace(small_spec, sim=replace(small_spec.sim, t_end=1e-3))
        trace, _ = simulate(spec)
        r_tot = 0.02 + 0.02 + 0.05
        t_to_row = {t: r for r, t in enumerate(trace.t.tolist())}
        starts = [ev for ev in trace.events
                  if ev.kind == "phase_change" and "->C" in ev.info]
        peaks = [ev for ev in trace.events if ev.kind == "peak_limit"]
        checked = 0
        for start in starts[:40]:
            end = next((p for p in peaks if p.t > start.t), None)
            if end is None or start.t not in t_to_row or end.t not in t_to_row:
                continue
            i0 = trace.i_l[t_to_row[start.t]]
            i1 = trace.i_l[t_to_row[end.t]]
            oracle = analytic_rl_segment(i0, spec.v_in, r_tot,
                                         spec.inductor.l, end.t - start.t)
            assert i1 == pytest.approx(oracle, rel=1e-8)
            checked += 1
        assert checked >= 3

    def test_zero_load_corner_goes_quiet(self):
        # an output with no load regulates once and the converter idles
        # for the rest of the run
        spec = make_spec(outputs=(make_output(target=0.5, i_load=0.0,
                                              c_out=2.2e-6, hysteresis=0.01),),
                         t_end=5e-4)
        trace, _ = simulate(spec)
        assert trace.phase[-1] == int(Phase.IDLE)
        assert trace.i_l[-1] == 0.0
        t_half = spec.sim.t_end / 2
        assert all(ev.t < t_half for ev in trace.events
                   if ev.kind == "phase_change")

    def test_repeated_timeouts_emit_a_warning_not_an_abort(self):
        # a lone below-input output has no drain target above v_in, so
        # startup rams the deliver timer repeatedly; that is reported
        spec = make_spec(outputs=(make_output(target=1.8, c_out=2.2e-6,
                                              i_load=8e-3),),
                         t_end=3e-4)
        trace, _ = simulate(spec)
        kinds = {ev.kind for ev in trace.events}
        assert "deliver_timeout" in kinds
        assert "warning" in kinds

    def test_overrun_peak_is_event_localized(self, small_spec):
        trace, _ = simulate(small_spec)
        peaks = [ev for ev in trace.events if ev.kind == "peak_limit"]
        assert peaks
        t_to_row = {t: r for r, t in enumerate(trace.t.tolist())}
        for ev in peaks[:50]:
            row = t_to_row[ev.t]
            assert trace.i_l[row] == pytest.approx(0.135, rel=1e-5)
