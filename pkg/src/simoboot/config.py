"""Sectioned plain-text configuration for converter descriptions.

Format: INI-style sections of `key = value` lines, `#` or `;` comments,
strict SI units throughout, scientific notation accepted. Unknown sections
or keys are errors, as are missing keys without a documented default.

    [input]                  # source and source-side switches
    v_in = 3.7               # V (required)
    r_sp = 0.02              # ohm, input-side switch (default 0)
    r_sy = 0.02              # ohm, ground-side switch (default 0)

    [inductor]
    l = 4.7e-6               # H (required)
    r_series = 0.05          # ohm (default 0)

    [bootstrap]
    c_boot = 100e-9          # F (required)
    v_drive = 5.3            # V, recharge rail (required)
    r_charge = 10.0          # ohm (default 1.0)
    v_f = 0.3                # V, recharge diode offset (default 0.3)
    r_s = 1.0                # ohm, recharge diode series (default 0)

    [driver]                 # optional section
    r1 = 200e3               # ohm (default 200e3)
    r2 = 200e3               # ohm (default 200e3)
    v_gs_unit = 0.7          # V (default 0.7)

    [controller]
    i_pk = 0.135             # A (required)
    t_on_max = 1e-6          # s (default 1e-6)
    t_deliver_max = 2e-6     # s (default 2e-6)
    arbitration_start = 0    # 0-based output index (default 0)
    gate_threshold = 1.0     # V (default 1.0)

    [sim]
    dt = 8e-9                # s (required)
    t_end = 40e-3            # s (required)
    sample_every = 400       # steps per periodic sample (default 100)

    [output.1]               # sections output.1 .. output.N, contiguous
    target = 12.0            # V (required)
    c_out = 22e-6            # F (required)
    i_load = 5e-3            # A (required)
    v_floor = 0.1            # V (default 0.1)
    r_on_each = 0.2          # ohm per switch of the pair (required)
    c_gate = 20e-12          # F (default 0)
    v_f = 0.3                # V, freewheel diode offset (default 0.3)
    r_s = 0.5                # ohm, freewheel diode series (default 0)
    hysteresis = 0.006       # V (required)
"""

from __future__ import annotations

import re
from dataclasses import replace

from .model import (BootstrapSpec, ControllerParams, ConverterSpec, DiodeModel,
                    DriverSpec, InductorSpec, LoadModel, OutputSpec, SimParams,
                    SwitchModel, validate)


class ConfigError(ValueError):
    """Parse or validation failure; .errors lists every problem found."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("\n".join(self.errors))


_SECTION_RE = re.compile(r"^\[([A-Za-z0-9_.]+)\]$")
_KEY_RE = re.compile(r"^([A-Za-z0-9_]+)\s*=\s*(.+)$")
_OUTPUT_RE = re.compile(r"^output\.(\d+)$")

# key -> (required, default); None sentinel for required values
_FLOAT_SCHEMA = {
    "input": {"v_in": None, "r_sp": 0.0, "r_sy": 0.0},
    "inductor": {"l": None, "r_series": 0.0},
    "bootstrap": {"c_boot": None, "v_drive": None, "r_charge": 1.0,
                  "v_f": 0.3, "r_s": 0.0},
    "driver": {"r1": 200e3, "r2": 200e3, "v_gs_unit": 0.7},
    "controller": {"i_pk": None, "t_on_max": 1e-6, "t_deliver_max": 2e-6,
                   "gate_threshold": 1.0},
    "sim": {"dt": None, "t_end": None},
}
_INT_SCHEMA = {
    "controller": {"arbitration_start": 0},
    "sim": {"sample_every": 100},
}
_OUTPUT_SCHEMA = {"target": None, "c_out": None, "i_load": None,
                  "v_floor": 0.1, "r_on_each": None, "c_gate": 0.0,
                  "v_f": 0.3, "r_s": 0.0, "hysteresis": None}
_REQUIRED_SECTIONS = ("input", "inductor", "bootstrap", "controller", "sim")


def _scan(text: str, errors: list[str]):
    """Split into {section: {key: (value_text, line)}} with duplicate checks."""
    sections: dict[str, dict[str, tuple[str, int]]] = {}
    section_line: dict[str, int] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].split(";", 1)[0].strip()
        if not line:
            continue
        m = _SECTION_RE.match(line)
        if m:
            name = m.group(1)
            if name in sections:
                errors.append(f"line {lineno}: duplicate section [{name}] "
                              f"(first at line {section_line[name]})")
                current = name
                continue
            sections[name] = {}
            section_line[name] = lineno
            current = name
            continue
        m = _KEY_RE.match(line)
        if not m:
            errors.append(f"line {lineno}: expected `key = value` or `[section]`, "
                          f"got {line!r}")
            continue
        if current is None:
            errors.append(f"line {lineno}: key outside any section")
            continue
        key, value = m.group(1), m.group(2).strip()
        if key in sections[current]:
            errors.append(f"line {lineno}: duplicate key {key!r} in [{current}]")
            continue
        sections[current][key] = (value, lineno)
    return sections


def _take(table, section, key, spec_default, conv, errors):
    entry = table.get(key)
    if entry is None:
        if spec_default is None:
            errors.append(f"section [{section}]: missing required key {key!r}")
            return None
        return spec_default
    text, lineno = entry
    del table[key]
    try:
        return conv(text)
    except ValueError:
        errors.append(f"line {lineno}: [{section}] {key} = {text!r} is not "
                      f"a valid {'integer' if conv is _to_int else 'number'}")
        return spec_default if spec_default is not None else None


def _to_float(text: str) -> float:
    return float(text)


def _to_int(text: str) -> int:
    return int(text, 10)


def parse_config(text: str) -> ConverterSpec:
    """Parse and validate a configuration document.

    Raises ConfigError carrying every parse and validation problem found,
    each with its location.
    """
    errors: list[str] = []
    sections = _scan(text, errors)

    # pull known sections; whatever remains unclaimed is unknown
    values: dict[str, dict[str, float]] = {}
    ints: dict[str, dict[str, int]] = {}
    for section, schema in _FLOAT_SCHEMA.items():
        table = sections.get(section, {})
        values[section] = {}
        for key, default in schema.items():
            got = _take(table, section, key, default, _to_float, errors)
            values[section][key] = got
    for section, schema in _INT_SCHEMA.items():
        table = sections.get(section, {})
        ints[section] = {}
        for key, default in schema.items():
            got = _take(table, section, key, default, _to_int, errors)
            ints[section][key] = got
    for name in _REQUIRED_SECTIONS:
        if name not in sections:
            errors.append(f"missing required section [{name}]")

    # output sections must be output.1 .. output.N with no gaps
    out_ids = []
    for name in sections:
        m = _OUTPUT_RE.match(name)
        if m:
            out_ids.append(int(m.group(1)))
    out_ids.sort()
    if not out_ids:
        errors.append("no [output.<k>] sections found (need at least output.1)")
    elif out_ids != list(range(1, len(out_ids) + 1)):
        errors.append(f"non-contiguous output sections: found "
                      f"{['output.%d' % k for k in out_ids]}, "
                      f"expected output.1..output.{len(out_ids)}")

    outputs = []
    for k in out_ids:
        section = f"output.{k}"
        table = sections.get(section, {})
        got = {}
        for key, default in _OUTPUT_SCHEMA.items():
            got[key] = _take(table, section, key, default, _to_float, errors)
        if any(x is None for x in got.values()):
            continue
        outputs.append(OutputSpec(
            target=got["target"],
            c_out=got["c_out"],
            load=LoadModel(i_load=got["i_load"], v_floor=got["v_floor"]),
            r_on_each=got["r_on_each"],
            c_gate=got["c_gate"],
            d_j=DiodeModel(v_f=got["v_f"], r_s=got["r_s"]),
            hysteresis=got["hysteresis"],
        ))

    # anything left over is unknown
    known = set(_FLOAT_SCHEMA) | set(_INT_SCHEMA) | {f"output.{k}" for k in out_ids}
    for name, table in sections.items():
        if name not in known:
            errors.append(f"unknown section [{name}]")
            continue
        for key, (_, lineno) in table.items():
            errors.append(f"line {lineno}: unknown key {key!r} in [{name}]")

    if errors:
        raise ConfigError(errors)

    spec = ConverterSpec(
        v_in=values["input"]["v_in"],
        inductor=InductorSpec(l=values["inductor"]["l"],
                              r_series=values["inductor"]["r_series"]),
        bootstrap=BootstrapSpec(
            c_boot=values["bootstrap"]["c_boot"],
            v_drive=values["bootstrap"]["v_drive"],
            d_b=DiodeModel(v_f=values["bootstrap"]["v_f"],
                           r_s=values["bootstrap"]["r_s"]),
            r_charge=values["bootstrap"]["r_charge"],
        ),
        switch_sp=SwitchModel(r_on=values["input"]["r_sp"]),
        switch_sy=SwitchModel(r_on=values["input"]["r_sy"]),
        outputs=tuple(outputs),
        controller=ControllerParams(
            i_pk=values["controller"]["i_pk"],
            t_on_max=values["controller"]["t_on_max"],
            t_deliver_max=values["controller"]["t_deliver_max"],
            arbitration_start=ints["controller"]["arbitration_start"],
            gate_threshold=values["controller"]["gate_threshold"],
        ),
        sim=SimParams(dt=values["sim"]["dt"], t_end=values["sim"]["t_end"],
                      sample_every=ints["sim"]["sample_every"]),
        driver=DriverSpec(r1=values["driver"]["r1"], r2=values["driver"]["r2"],
                          v_gs_unit=values["driver"]["v_gs_unit"]),
    )
    problems = validate(spec)
    if problems:
        raise ConfigError([f"validation: {p}" for p in problems])
    return spec


def parse_config_file(path) -> ConverterSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def render_config(spec: ConverterSpec) -> str:
    """Emit a document that parses back to the same spec (full precision)."""
    lines = [
        "[input]",
        f"v_in = {spec.v_in!r}",
        f"r_sp = {spec.switch_sp.r_on!r}",
        f"r_sy = {spec.switch_sy.r_on!r}",
        "",
        "[inductor]",
        f"l = {spec.inductor.l!r}",
        f"r_series = {spec.inductor.r_series!r}",
        "",
        "[bootstrap]",
        f"c_boot = {spec.bootstrap.c_boot!r}",
        f"v_drive = {spec.bootstrap.v_drive!r}",
        f"r_charge = {spec.bootstrap.r_charge!r}",
        f"v_f = {spec.bootstrap.d_b.v_f!r}",
        f"r_s = {spec.bootstrap.d_b.r_s!r}",
        "",
        "[driver]",
        f"r1 = {spec.driver.r1!r}",
        f"r2 = {spec.driver.r2!r}",
        f"v_gs_unit = {spec.driver.v_gs_unit!r}",
        "",
        "[controller]",
        f"i_pk = {spec.controller.i_pk!r}",
        f"t_on_max = {spec.controller.t_on_max!r}",
        f"t_deliver_max = {spec.controller.t_deliver_max!r}",
        f"arbitration_start = {spec.controller.arbitration_start!r}",
        f"gate_threshold = {spec.controller.gate_threshold!r}",
        "",
        "[sim]",
        f"dt = {spec.sim.dt!r}",
        f"t_end = {spec.sim.t_end!r}",
        f"sample_every = {spec.sim.sample_every!r}",
    ]
    for k, out in enumerate(spec.outputs, start=1):
        lines += [
            "",
            f"[output.{k}]",
            f"target = {out.target!r}",
            f"c_out = {out.c_out!r}",
            f"i_load = {out.load.i_load!r}",
            f"v_floor = {out.load.v_floor!r}",
            f"r_on_each = {out.r_on_each!r}",
            f"c_gate = {out.c_gate!r}",
            f"v_f = {out.d_j.v_f!r}",
            f"r_s = {out.d_j.r_s!r}",
            f"hysteresis = {out.hysteresis!r}",
        ]
    return "\n".join(lines) + "\n"


# dotted config addresses (as used by `sweep --param`) -> spec surgery
def apply_override(spec: ConverterSpec, dotted: str, value: float) -> ConverterSpec:
    """Return a copy of the spec with one config-addressed value replaced.

    Addresses mirror the file format, e.g. `controller.i_pk`,
    `inductor.l`, `output.2.r_on_each`, `input.v_in`, `sim.t_end`.
    """
    parts = dotted.split(".")
    try:
        if parts[0] == "output" and len(parts) == 3:
            idx = int(parts[1]) - 1
            if not 0 <= idx < spec.n_outputs:
                raise KeyError
            out = spec.outputs[idx]
            key = parts[2]
            if key in ("target", "c_out", "r_on_each", "c_gate", "hysteresis"):
                out = replace(out, **{key: value})
            elif key == "i_load":
                out = replace(out, load=replace(out.load, i_load=value))
            elif key == "v_floor":
                out = replace(out, load=replace(out.load, v_floor=value))
            elif key == "v_f":
                out = replace(out, d_j=replace(out.d_j, v_f=value))
            elif key == "r_s":
                out = replace(out, d_j=replace(out.d_j, r_s=value))
            else:
                raise KeyError
            outputs = list(spec.outputs)
            outputs[idx] = out
            return replace(spec, outputs=tuple(outputs))
        section, key = parts
        if section == "input":
            if key == "v_in":
                return replace(spec, v_in=value)
            if key == "r_sp":
                return replace(spec, switch_sp=replace(spec.switch_sp, r_on=value))
            if key == "r_sy":
                return replace(spec, switch_sy=replace(spec.switch_sy, r_on=value))
        elif section == "inductor" and key in ("l", "r_series"):
            return replace(spec, inductor=replace(spec.inductor, **{key: value}))
        elif section == "bootstrap":
            bst = spec.bootstrap
            if key in ("c_boot", "v_drive", "r_charge"):
                return replace(spec, bootstrap=replace(bst, **{key: value}))
            if key == "v_f":
                return replace(spec, bootstrap=replace(bst, d_b=replace(bst.d_b, v_f=value)))
            if key == "r_s":
                return replace(spec, bootstrap=replace(bst, d_b=replace(bst.d_b, r_s=value)))
        elif section == "driver" and key in ("r1", "r2", "v_gs_unit"):
            return replace(spec, driver=replace(spec.driver, **{key: value}))
        elif section == "controller":
            if key == "arbitration_start":
                return replace(spec, controller=replace(spec.controller,
                                                        arbitration_start=int(value)))
            if key in ("i_pk", "t_on_max", "t_deliver_max", "gate_threshold"):
                return replace(spec, controller=replace(spec.controller,
                                                        **{key: value}))
        elif section == "sim":
            if key == "sample_every":
                return replace(spec, sim=replace(spec.sim, sample_every=int(value)))
            if key in ("dt", "t_end"):
                return replace(spec, sim=replace(spec.sim, **{key: value}))
        raise KeyError
    except (KeyError, ValueError, IndexError):
        raise KeyError(f"unknown config address {dotted!r}") from None
