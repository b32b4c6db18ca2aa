from pathlib import Path

import pytest

from simoboot import (BootstrapSpec, ControllerParams, ConverterSpec,
                      DiodeModel, DriverSpec, InductorSpec, LoadModel,
                      OutputSpec, SimParams, SwitchModel)

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"
QUAD_CONFIG = CONFIG_DIR / "quad_output.conf"
LOWLOSS_CONFIG = CONFIG_DIR / "single_boost_lowloss.conf"


def make_output(target=12.0, c_out=10e-6, i_load=8e-3, r_on_each=0.2,
                c_gate=20e-12, hysteresis=0.006, v_floor=0.1,
                d_j=DiodeModel(0.3, 0.5)):
    return OutputSpec(target=target, c_out=c_out,
                      load=LoadModel(i_load=i_load, v_floor=v_floor),
                      r_on_each=r_on_each, c_gate=c_gate, d_j=d_j,
                      hysteresis=hysteresis)


def make_spec(outputs=None, v_in=3.7, l=4.7e-6, r_series=0.05, r_sp=0.02,
              r_sy=0.02, c_boot=100e-9, v_drive=5.3, d_b=DiodeModel(0.3, 1.0),
              r_charge=10.0, i_pk=0.135, t_on_max=1e-6, t_deliver_max=2e-6,
              dt=4e-9, t_end=3e-4, sample_every=200, arbitration_start=0):
    if outputs is None:
        outputs = (make_output(),)
    return ConverterSpec(
        v_in=v_in,
        inductor=InductorSpec(l=l, r_series=r_series),
        bootstrap=BootstrapSpec(c_boot=c_boot, v_drive=v_drive, d_b=d_b,
                                r_charge=r_charge),
        switch_sp=SwitchModel(r_on=r_sp),
        switch_sy=SwitchModel(r_on=r_sy),
        outputs=tuple(outputs),
        controller=ControllerParams(i_pk=i_pk, t_on_max=t_on_max,
                                    t_deliver_max=t_deliver_max,
                                    arbitration_start=arbitration_start),
        sim=SimParams(dt=dt, t_end=t_end, sample_every=sample_every),
        driver=DriverSpec(),
    )


@pytest.fixture
def small_spec():
    """Single 12 V boost output; fast enough for per-test simulation."""
    return make_spec()
