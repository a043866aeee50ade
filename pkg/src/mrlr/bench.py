"""Benchmark runners: perturbation sweeps and runtime scaling.

CSV schemas are fixed so downstream plotting can rely on column order:

* perturbation sweep:   axis,magnitude,trials,successes,rate
* runtime scaling:      variant,m,n,s,mean_ms,std_ms

Timing excludes one warm-up run and reports mean/std over the remaining
repetitions of wall-clock time.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass

import numpy as np

from . import dictionary as dict_mod
from .align import AlignConfig, Probe, RoaPoint, align, region_of_attraction
from .dictionary import Dictionary
from .errors import InvalidInputError
from .imageops import Frame, Image
from .synth import SynthSpec, generate_images
from .transform import IDENTITY, SimilarityParams

__all__ = [
    "ROA_CSV_HEADER",
    "SCALE_CSV_HEADER",
    "worker_count",
    "atom_probes",
    "roa_csv",
    "bench_roa",
    "ScaleRow",
    "bench_scale",
    "scale_csv",
]

ROA_CSV_HEADER = "axis,magnitude,trials,successes,rate"
SCALE_CSV_HEADER = "variant,m,n,s,mean_ms,std_ms"


def worker_count() -> int:
    """Worker cap from MRLR_THREADS; 0 or unset means sequential."""
    raw = os.environ.get("MRLR_THREADS", "0")
    try:
        n = int(raw)
    except ValueError as exc:
        raise InvalidInputError(f"MRLR_THREADS must be an integer, got {raw!r}") from exc
    if n < 0:
        raise InvalidInputError("MRLR_THREADS must be nonnegative")
    return n


def atom_probes(dct: Dictionary) -> list[Probe]:
    """Dictionary atoms reshaped as perfectly aligned probes."""
    fh, fw = dct.frame.height, dct.frame.width
    return [
        Probe(image=Image(dct.atoms[:, j].reshape(fh, fw)), tau_true=IDENTITY)
        for j in range(dct.n)
    ]


def roa_csv(points: list[RoaPoint]) -> str:
    lines = [ROA_CSV_HEADER]
    for p in points:
        lines.append(f"{p.axis},{p.magnitude!r},{p.trials},{p.successes},{p.rate!r}")
    return "\n".join(lines) + "\n"


def bench_roa(
    dct: Dictionary,
    axis: str,
    magnitudes,
    trials: int,
    seed: int,
    cfg: AlignConfig | None = None,
    probes: list[Probe] | None = None,
) -> list[RoaPoint]:
    """Perturbation sweep; defaults to dictionary atoms as probes."""
    if probes is None:
        probes = atom_probes(dct)
    return region_of_attraction(
        dct,
        probes,
        axis=axis,
        magnitudes=magnitudes,
        trials=trials,
        seed=seed,
        cfg=cfg,
        threads=worker_count(),
    )


@dataclass(frozen=True)
class ScaleRow:
    variant: str
    m: int
    n: int
    s: int
    mean_ms: float
    std_ms: float


def _parse_frame(text: str) -> Frame:
    try:
        w, h = text.lower().split("x")
        return Frame(int(w), int(h))
    except ValueError as exc:
        raise InvalidInputError(f"bad frame spec {text!r}, expected WxH") from exc


def _scale_dictionary(seed: int, frame: Frame, subjects: int, samples: int) -> tuple[Dictionary, Image]:
    """Synthetic dictionary plus one held-out query of subject 0."""
    spec = SynthSpec(
        seed=seed,
        subjects=subjects,
        samples=samples,
        frame=frame,
        held_out=0,
        outside=0,
    )
    data = generate_images(spec)
    images = [img for img, _ in data.train]
    labels = [lab for _, lab in data.train]
    dct = dict_mod.build(images, labels, frame)
    query_spec = SynthSpec(
        seed=seed,
        subjects=1,
        samples=1,
        frame=frame,
        held_out=1,
    )
    query = generate_images(query_spec).heldout[0][0]
    return dct, query


def _time_align(dct: Dictionary, query: Image, cfg: AlignConfig, reps: int) -> tuple[float, float]:
    tau0 = SimilarityParams(1.0, 0.0, 0.05 * dct.frame.width, 0.0)
    align(query, dct, tau0, cfg)  # warm-up, excluded
    samples = []
    for _ in range(reps):
        t0 = time.perf_counter()
        align(query, dct, tau0, cfg)
        samples.append((time.perf_counter() - t0) * 1e3)
    arr = np.asarray(samples)
    return float(arr.mean()), float(arr.std())


def bench_scale(
    mode: str,
    spec_values: list[str],
    seed: int = 0,
    reps: int = 5,
    s: int = 20,
    subjects: int = 10,
    samples: int = 20,
    frame: str = "40x35",
    sigma: float = 0.2,
) -> list[ScaleRow]:
    """Per-query alignment wall time for the full and truncated variants.

    ``mode='dims'`` sweeps frame sizes (spec values like ``80x70``) at a fixed
    atom count; ``mode='subjects'`` sweeps subject counts at a fixed frame.
    """
    if mode not in ("dims", "subjects"):
        raise InvalidInputError(f"mode must be 'dims' or 'subjects', got {mode!r}")
    if reps < 1:
        raise InvalidInputError("reps must be at least 1")
    rows: list[ScaleRow] = []
    for val in spec_values:
        if mode == "dims":
            fr = _parse_frame(val)
            subj = subjects
        else:
            fr = _parse_frame(frame)
            subj = int(val)
            if subj < 1:
                raise InvalidInputError(f"subject count must be positive, got {val!r}")
        dct, query = _scale_dictionary(seed, fr, subj, samples)
        s_eff = min(s, dct.n)
        for variant, cfg in (
            ("mrlr1", AlignConfig(sigma=sigma, s=None)),
            ("mrlr2", AlignConfig(sigma=sigma, s=s_eff)),
        ):
            mean_ms, std_ms = _time_align(dct, query, cfg, reps)
            rows.append(
                ScaleRow(
                    variant=variant,
                    m=fr.m,
                    n=dct.n,
                    s=dct.n if variant == "mrlr1" else s_eff,
                    mean_ms=mean_ms,
                    std_ms=std_ms,
                )
            )
    return rows


def scale_csv(rows: list[ScaleRow]) -> str:
    lines = [SCALE_CSV_HEADER]
    for r in rows:
        lines.append(f"{r.variant},{r.m},{r.n},{r.s},{r.mean_ms!r},{r.std_ms!r}")
    return "\n".join(lines) + "\n"
