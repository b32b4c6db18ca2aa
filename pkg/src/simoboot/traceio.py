"""CSV serialization of traces.

Schema (bit-exact header, one row per sample, rows in time order):

    time,i_l,v_l_plus,v_boot_top,v_boot,phase,selected,v_out_1,...,v_out_N

Numeric fields carry 12 significant digits; phase is C, D or I; selected is
the 0-based output index or -1. Output identical traces byte for byte.
"""

from __future__ import annotations

import io
import os
from pathlib import Path

import numpy as np

from .engine import Trace

_PHASE_CHARS = ("C", "D", "I")
_PHASE_FROM_CHAR = {"C": 0, "D": 1, "I": 2}


def csv_header(n_outputs: int) -> str:
    cols = ["time", "i_l", "v_l_plus", "v_boot_top", "v_boot", "phase",
            "selected"]
    cols += [f"v_out_{k}" for k in range(1, n_outputs + 1)]
    return ",".join(cols)


def format_trace_csv(trace: Trace) -> str:
    n = trace.n_outputs
    out = io.StringIO()
    out.write(csv_header(n))
    out.write("\n")
    fmt = "%.12g"
    for row in range(len(trace)):
        fields = [
            fmt % trace.t[row],
            fmt % trace.i_l[row],
            fmt % trace.v_l_plus[row],
            fmt % trace.v_boot_top[row],
            fmt % trace.v_boot[row],
            _PHASE_CHARS[trace.phase[row]],
            str(int(trace.selected[row])),
        ]
        fields += [fmt % trace.v_out[row, k] for k in range(n)]
        out.write(",".join(fields))
        out.write("\n")
    return out.getvalue()


def write_trace_csv(trace: Trace, destination) -> int:
    """Serialize to a path or writable text file; returns bytes written."""
    text = format_trace_csv(trace)
    data = text.encode("utf-8")
    if isinstance(destination, (str, Path, os.PathLike)):
        try:
            with open(destination, "wb") as fh:
                fh.write(data)
        except OSError as exc:
            raise OSError(f"cannot write trace to {destination!r}: {exc}") from exc
    else:
        destination.write(text)
    return len(data)


def read_trace_csv(source) -> Trace:
    """Load a trace written by write_trace_csv. Spec and events are not
    part of the CSV, so the result carries spec=None and no events."""
    if isinstance(source, (str, Path, os.PathLike)):
        with open(source, "r", encoding="utf-8", newline="") as fh:
            lines = fh.read().splitlines()
    else:
        lines = source.read().splitlines()
    if not lines:
        raise ValueError("empty trace file")
    header = lines[0].split(",")
    fixed = ["time", "i_l", "v_l_plus", "v_boot_top", "v_boot", "phase",
             "selected"]
    if header[:7] != fixed:
        raise ValueError(f"unexpected CSV header: {lines[0]!r}")
    n = len(header) - 7
    expected = [f"v_out_{k}" for k in range(1, n + 1)]
    if header[7:] != expected:
        raise ValueError(f"unexpected output columns: {header[7:]!r}")

    rows = len(lines) - 1
    t = np.empty(rows)
    i_l = np.empty(rows)
    v_l_plus = np.empty(rows)
    v_boot_top = np.empty(rows)
    v_boot = np.empty(rows)
    phase = np.empty(rows, dtype=np.int8)
    selected = np.empty(rows, dtype=np.int32)
    v_out = np.empty((rows, n))
    for r, line in enumerate(lines[1:]):
        parts = line.split(",")
        if len(parts) != 7 + n:
            raise ValueError(f"row {r + 2}: expected {7 + n} fields, "
                             f"got {len(parts)}")
        t[r] = float(parts[0])
        i_l[r] = float(parts[1])
        v_l_plus[r] = float(parts[2])
        v_boot_top[r] = float(parts[3])
        v_boot[r] = float(parts[4])
        try:
            phase[r] = _PHASE_FROM_CHAR[parts[5]]
        except KeyError:
            raise ValueError(f"row {r + 2}: bad phase tag {parts[5]!r}") from None
        selected[r] = int(parts[6])
        for k in range(n):
            v_out[r, k] = float(parts[7 + k])
    return Trace(spec=None, t=t, i_l=i_l, v_l_plus=v_l_plus,
                 v_boot_top=v_boot_top, v_boot=v_boot, phase=phase,
                 selected=selected, v_out=v_out, events=[])
