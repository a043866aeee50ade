"""Deterministic synthetic face-crop datasets.

Each subject identity is a fixed set of Gaussian blobs layered on a shared
broad oval; samples vary by illumination gain/offset and a smooth additive
noise field.  Given the same spec, generation is bitwise reproducible, which
the file-determinism checks rely on.

On-disk layout: one zero-padded numeric directory per subject holding 8-bit
PGM files, an optional ``outside/`` directory, and a ``manifest.txt`` that
records the spec, the train/held-out split, and the measured maximum
correlation between subject mean images.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidInputError
from .imageops import Frame, Image, _sample
from .pgm import read_pgm_file, write_pgm_file

__all__ = [
    "SynthSpec",
    "SynthData",
    "DatasetContents",
    "generate_images",
    "synth_generate",
    "load_dataset",
    "parse_manifest",
    "MANIFEST_NAME",
]

MANIFEST_NAME = "manifest.txt"


@dataclass(frozen=True)
class SynthSpec:
    """Generation parameters; identical specs yield identical bytes."""

    seed: int
    subjects: int
    samples: int
    frame: Frame
    blobs: int = 4
    held_out: int = 0
    outside: int = 0
    gain_range: tuple[float, float] = (0.7, 1.3)
    offset_range: tuple[float, float] = (-0.1, 0.1)
    noise_amplitude: float = 0.02

    def __post_init__(self):
        if self.subjects < 1 or self.samples < 1 or self.blobs < 1:
            raise InvalidInputError("subjects, samples, and blobs must be positive")
        if self.held_out < 0 or self.outside < 0:
            raise InvalidInputError("held_out and outside must be nonnegative")
        if self.seed < 0:
            raise InvalidInputError("seed must be nonnegative")


@dataclass
class SynthData:
    """In-memory dataset: (image, label) pairs plus outside images."""

    train: list[tuple[Image, int]]
    heldout: list[tuple[Image, int]]
    outside: list[Image]
    mean_corr_max: float


@dataclass
class DatasetContents:
    train_images: list[Image] = field(default_factory=list)
    train_labels: list[int] = field(default_factory=list)
    heldout_images: list[Image] = field(default_factory=list)
    heldout_labels: list[int] = field(default_factory=list)
    outside_images: list[Image] = field(default_factory=list)


def _rng(spec: SynthSpec, *stream: int) -> np.random.Generator:
    return np.random.default_rng([spec.seed, *stream])


def _identity_basis(spec: SynthSpec, rng: np.random.Generator) -> np.ndarray:
    """Blob layout defining one identity, rendered onto the shared oval."""
    w, h = spec.frame.width, spec.frame.height
    xs, ys = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    base = 0.15 + 0.3 * np.exp(
        -((xs - cx) ** 2 / (2.0 * (0.30 * w) ** 2) + (ys - cy) ** 2 / (2.0 * (0.35 * h) ** 2))
    )
    for _ in range(spec.blobs):
        bx = rng.uniform(0.22 * w, 0.78 * w)
        by = rng.uniform(0.22 * h, 0.78 * h)
        sg = rng.uniform(0.07 * w, 0.15 * w)
        amp = rng.uniform(0.3, 0.65)
        base = base + amp * np.exp(-(((xs - bx) ** 2) + (ys - by) ** 2) / (2.0 * sg * sg))
    return base


def _smooth_noise(spec: SynthSpec, rng: np.random.Generator) -> np.ndarray:
    """Low-frequency field: a coarse uniform grid bilinearly upsampled."""
    w, h = spec.frame.width, spec.frame.height
    coarse = rng.uniform(-1.0, 1.0, size=(5, 5))
    xs, ys = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    u = xs * (coarse.shape[1] - 1) / max(w - 1, 1)
    v = ys * (coarse.shape[0] - 1) / max(h - 1, 1)
    return _sample(coarse, u, v)


def _render_sample(spec: SynthSpec, basis: np.ndarray, rng: np.random.Generator) -> Image:
    gain = rng.uniform(*spec.gain_range)
    offset = rng.uniform(*spec.offset_range)
    px = gain * basis + offset
    if spec.noise_amplitude > 0:
        px = px + spec.noise_amplitude * _smooth_noise(spec, rng)
    return Image(np.clip(px, 0.0, 1.0))


def generate_images(spec: SynthSpec) -> SynthData:
    """Render the full dataset in memory."""
    train: list[tuple[Image, int]] = []
    heldout: list[tuple[Image, int]] = []
    means = []
    for subj in range(spec.subjects):
        basis = _identity_basis(spec, _rng(spec, 0, subj))
        subj_train = [
            _render_sample(spec, basis, _rng(spec, 1, subj, i)) for i in range(spec.samples)
        ]
        train.extend((img, subj) for img in subj_train)
        heldout.extend(
            (_render_sample(spec, basis, _rng(spec, 2, subj, i)), subj)
            for i in range(spec.held_out)
        )
        means.append(np.mean([img.pixels for img in subj_train], axis=0).reshape(-1))
    outside = []
    for j in range(spec.outside):
        basis = _identity_basis(spec, _rng(spec, 3, j))
        outside.append(_render_sample(spec, basis, _rng(spec, 4, j)))

    corr = 0.0
    for i in range(len(means)):
        for j in range(i + 1, len(means)):
            corr = max(corr, float(np.corrcoef(means[i], means[j])[0, 1]))
    return SynthData(train=train, heldout=heldout, outside=outside, mean_corr_max=corr)


def synth_generate(spec: SynthSpec, out_dir) -> Path:
    """Write the dataset and manifest under ``out_dir``; returns the manifest path."""
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    data = generate_images(spec)
    pad = max(2, len(str(spec.subjects - 1)))
    rows = []

    per_subject_train: dict[int, int] = {}
    for img, subj in data.train:
        i = per_subject_train.get(subj, 0)
        per_subject_train[subj] = i + 1
        rel = f"{subj:0{pad}d}/train{i:03d}.pgm"
        (root / rel).parent.mkdir(exist_ok=True)
        write_pgm_file(img, root / rel)
        rows.append((rel, subj, "train"))
    per_subject_held: dict[int, int] = {}
    for img, subj in data.heldout:
        i = per_subject_held.get(subj, 0)
        per_subject_held[subj] = i + 1
        rel = f"{subj:0{pad}d}/held{i:03d}.pgm"
        (root / rel).parent.mkdir(exist_ok=True)
        write_pgm_file(img, root / rel)
        rows.append((rel, subj, "heldout"))
    for j, img in enumerate(data.outside):
        rel = f"outside/out{j:03d}.pgm"
        (root / rel).parent.mkdir(exist_ok=True)
        write_pgm_file(img, root / rel)
        rows.append((rel, spec.subjects + j, "outside"))

    lines = [
        f"seed={spec.seed}",
        f"subjects={spec.subjects}",
        f"samples={spec.samples}",
        f"held_out={spec.held_out}",
        f"outside={spec.outside}",
        f"frame={spec.frame.width}x{spec.frame.height}",
        f"blobs={spec.blobs}",
        f"noise_amplitude={spec.noise_amplitude!r}",
        f"mean_corr_max={data.mean_corr_max!r}",
        "[files]",
        "path,subject,role",
    ]
    lines.extend(f"{rel},{subj},{role}" for rel, subj, role in rows)
    manifest = root / MANIFEST_NAME
    manifest.write_text("\n".join(lines) + "\n", encoding="ascii")
    return manifest


def parse_manifest(path):
    """Parse a manifest into (header dict, list of (path, subject, role))."""
    header: dict[str, str] = {}
    rows: list[tuple[str, int, str]] = []
    section = "header"
    for raw in Path(path).read_text(encoding="ascii").splitlines():
        line = raw.strip()
        if not line:
            continue
        if line == "[files]":
            section = "files"
            continue
        if section == "header":
            if "=" not in line:
                raise InvalidInputError(f"bad manifest line {line!r}")
            key, val = line.split("=", 1)
            header[key] = val
        else:
            if line == "path,subject,role":
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise InvalidInputError(f"bad manifest row {line!r}")
            rows.append((parts[0], int(parts[1]), parts[2]))
    return header, rows


def _crop_to_frame(img: Image, frame: Frame) -> Image:
    if img.width == frame.width and img.height == frame.height:
        return img
    if img.width < frame.width or img.height < frame.height:
        raise InvalidInputError(
            f"image {img.width}x{img.height} smaller than frame {frame.width}x{frame.height}"
        )
    ox = (img.width - frame.width) // 2
    oy = (img.height - frame.height) // 2
    return Image(img.pixels[oy : oy + frame.height, ox : ox + frame.width])


def load_dataset(root, frame: Frame) -> DatasetContents:
    """Load a dataset directory, center-cropping every image to ``frame``.

    With a manifest, the recorded split is honored; otherwise every PGM in a
    numeric subject directory counts as training data and everything under
    ``outside/`` as outside data.
    """
    root = Path(root)
    if not root.is_dir():
        raise InvalidInputError(f"dataset root {root} is not a directory")
    out = DatasetContents()
    manifest = root / MANIFEST_NAME
    if manifest.is_file():
        _, rows = parse_manifest(manifest)
        for rel, subj, role in rows:
            img = _crop_to_frame(read_pgm_file(root / rel), frame)
            if role == "train":
                out.train_images.append(img)
                out.train_labels.append(subj)
            elif role == "heldout":
                out.heldout_images.append(img)
                out.heldout_labels.append(subj)
            elif role == "outside":
                out.outside_images.append(img)
            else:
                raise InvalidInputError(f"unknown role {role!r} in manifest")
        return out
    for sub in sorted(root.iterdir()):
        if not sub.is_dir():
            continue
        if sub.name == "outside":
            for f in sorted(sub.glob("*.pgm")):
                out.outside_images.append(_crop_to_frame(read_pgm_file(f), frame))
            continue
        if not sub.name.isdigit():
            raise InvalidInputError(f"subject directory {sub.name!r} is not numeric")
        label = int(sub.name)
        for f in sorted(sub.glob("*.pgm")):
            out.train_images.append(_crop_to_frame(read_pgm_file(f), frame))
            out.train_labels.append(label)
    if not out.train_images:
        raise InvalidInputError(f"no training images found under {root}")
    return out
