"""Line-oriented alignment trace files: key=value header, then sections.

Floats are written with ``repr`` so parsed traces reproduce the in-memory
values exactly.
"""

from __future__ import annotations

import numpy as np

from .align import AlignResult, InnerRecord
from .errors import InvalidInputError
from .transform import SimilarityParams, to_vector

__all__ = ["format_trace", "parse_trace", "write_trace", "read_trace"]

_ITER_HEADER = "outer,inner,delta_norm,residual,objective"


def format_trace(result: AlignResult, settings: dict | None = None) -> str:
    """Render an alignment result (plus optional settings) as trace text."""
    lines = []
    for key, val in (settings or {}).items():
        lines.append(f"{key}={_fmt(val)}")
    lines.append(f"converged={'true' if result.converged else 'false'}")
    tau = to_vector(result.tau_final)
    lines.append("tau_final=" + " ".join(repr(float(v)) for v in tau))
    lines.append("[selected]")
    for outer, idx in enumerate(result.selected_atoms, start=1):
        lines.append(f"{outer}:" + " ".join(str(int(i)) for i in idx))
    lines.append("[iterations]")
    lines.append(_ITER_HEADER)
    for rec in result.trace:
        lines.append(
            f"{rec.outer},{rec.inner},{rec.step_norm!r},{rec.residual_norm!r},{rec.objective!r}"
        )
    return "\n".join(lines) + "\n"


def _fmt(val) -> str:
    if isinstance(val, bool):
        return "true" if val else "false"
    if isinstance(val, float):
        return repr(val)
    return str(val)


def parse_trace(text: str):
    """Parse trace text into (header dict, selected-atom lists, records)."""
    header: dict[str, str] = {}
    selected: list[np.ndarray] = []
    records: list[InnerRecord] = []
    tau_final = None
    converged = None
    section = "header"
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line == "[selected]":
            section = "selected"
            continue
        if line == "[iterations]":
            section = "iterations"
            continue
        if section == "header":
            if "=" not in line:
                raise InvalidInputError(f"bad header line {line!r}")
            key, val = line.split("=", 1)
            if key == "tau_final":
                parts = [float(v) for v in val.split()]
                if len(parts) != 4:
                    raise InvalidInputError("tau_final must have 4 components")
                tau_final = SimilarityParams(*parts)
            elif key == "converged":
                converged = val == "true"
            else:
                header[key] = val
        elif section == "selected":
            outer_s, _, idx_s = line.partition(":")
            if int(outer_s) != len(selected) + 1:
                raise InvalidInputError("selected sections out of order")
            selected.append(np.array([int(v) for v in idx_s.split()], dtype=np.intp))
        else:
            if line == _ITER_HEADER:
                continue
            parts = line.split(",")
            if len(parts) != 5:
                raise InvalidInputError(f"bad iteration row {line!r}")
            records.append(
                InnerRecord(
                    outer=int(parts[0]),
                    inner=int(parts[1]),
                    step_norm=float(parts[2]),
                    residual_norm=float(parts[3]),
                    objective=float(parts[4]),
                )
            )
    if tau_final is None or converged is None:
        raise InvalidInputError("trace is missing tau_final or converged")
    return {"header": header, "tau_final": tau_final, "converged": converged,
            "selected_atoms": selected, "records": records}


def write_trace(result: AlignResult, path, settings: dict | None = None) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(format_trace(result, settings))


def read_trace(path):
    with open(path, "r", encoding="ascii") as fh:
        return parse_trace(fh.read())
