"""Atom dictionary, locality adaptor, truncation, and the binary file format.

The dictionary holds unit-norm vectorized training crops with per-atom
subject labels; atoms flagged as outside data enrich the alignment subspace
but never contribute to classification residuals.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DictionaryFormatError, InvalidInputError
from .imageops import Frame, Image, vectorize_normalize

__all__ = [
    "Dictionary",
    "LocalityAdaptor",
    "build",
    "adaptor_penalties",
    "locality_adaptor",
    "select_top_s",
    "subdictionary",
    "augment_with_outside",
    "save_dictionary",
    "load_dictionary",
    "dictionary_to_bytes",
    "dictionary_from_bytes",
]

_MAGIC = b"MRLRDICT"
_VERSION = 1
_NORM_TOL = 1e-9


@dataclass(frozen=True)
class Dictionary:
    """m x n matrix of unit-norm atoms with subject labels and outside flags."""

    atoms: np.ndarray
    labels: np.ndarray
    outside: np.ndarray
    frame: Frame

    def __post_init__(self):
        atoms = np.ascontiguousarray(np.asarray(self.atoms, dtype=np.float64))
        labels = np.asarray(self.labels, dtype=np.int64)
        outside = np.asarray(self.outside, dtype=bool)
        if atoms.ndim != 2:
            raise InvalidInputError("atoms must be an m x n matrix")
        m, n = atoms.shape
        if m != self.frame.m:
            raise InvalidInputError(f"atom length {m} does not match frame m={self.frame.m}")
        if labels.shape != (n,) or outside.shape != (n,):
            raise InvalidInputError("labels and outside flags must have one entry per atom")
        if np.any(labels < 0):
            raise InvalidInputError("labels must be nonnegative")
        norms = np.linalg.norm(atoms, axis=0)
        if n and np.any(np.abs(norms - 1.0) > _NORM_TOL):
            worst = float(np.abs(norms - 1.0).max())
            raise InvalidInputError(f"atom columns must be unit norm (worst deviation {worst:.3g})")
        train = set(labels[~outside].tolist())
        if train & set(labels[outside].tolist()):
            raise InvalidInputError("outside atoms must not share labels with training subjects")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "outside", outside)

    @property
    def m(self) -> int:
        return self.atoms.shape[0]

    @property
    def n(self) -> int:
        return self.atoms.shape[1]

    @property
    def k(self) -> int:
        """Number of distinct training subjects (outside atoms excluded)."""
        return int(np.unique(self.labels[~self.outside]).size)

    def subject_labels(self) -> np.ndarray:
        """Sorted distinct training-subject labels."""
        return np.unique(self.labels[~self.outside])


@dataclass(frozen=True)
class LocalityAdaptor:
    """Per-atom penalties, zero at the most correlated atom."""

    c: np.ndarray
    sigma: float

    def __post_init__(self):
        c = np.asarray(self.c, dtype=np.float64)
        if c.ndim != 1 or c.size == 0:
            raise InvalidInputError("adaptor must be a nonempty vector")
        if self.sigma <= 0:
            raise InvalidInputError("sigma must be positive")
        if np.any(c < 0) or c.min() != 0.0:
            raise InvalidInputError("adaptor must be nonnegative with an exact zero minimum")
        object.__setattr__(self, "c", c)


def build(images: Sequence[Image], labels: Sequence[int], frame: Frame) -> Dictionary:
    """Stack unit-normalized vectorized images as dictionary columns."""
    if len(images) != len(labels):
        raise InvalidInputError(f"{len(images)} images but {len(labels)} labels")
    if not images:
        raise InvalidInputError("cannot build an empty dictionary")
    atoms = np.empty((frame.m, len(images)), dtype=np.float64)
    for j, img in enumerate(images):
        if img.width != frame.width or img.height != frame.height:
            raise InvalidInputError(
                f"image {j} is {img.width}x{img.height}, frame is {frame.width}x{frame.height}"
            )
        atoms[:, j] = vectorize_normalize(img)
    return Dictionary(
        atoms=atoms,
        labels=np.asarray(labels, dtype=np.int64),
        outside=np.zeros(len(images), dtype=bool),
        frame=frame,
    )


def adaptor_penalties(atoms: np.ndarray, y: np.ndarray, sigma: float) -> np.ndarray:
    """Raw penalty vector ``max_j exp(d_j . y / sigma) - exp(d_i . y / sigma)``."""
    e = np.exp((atoms.T @ y) / sigma)
    return e.max() - e


def locality_adaptor(dictionary: Dictionary, y_hat: np.ndarray, sigma: float) -> LocalityAdaptor:
    """Locality penalties for a unit-norm query.

    The most correlated atom gets penalty exactly zero; decorrelated atoms
    are suppressed exponentially on the scale set by ``sigma``.
    """
    if sigma <= 0:
        raise InvalidInputError("sigma must be positive")
    y = np.asarray(y_hat, dtype=np.float64).reshape(-1)
    if y.shape != (dictionary.m,):
        raise InvalidInputError(f"query has length {y.size}, dictionary m={dictionary.m}")
    nrm = np.linalg.norm(y)
    if abs(nrm - 1.0) > 1e-9:
        raise InvalidInputError(f"query must be unit norm, got ||y||={nrm!r}")
    return LocalityAdaptor(c=adaptor_penalties(dictionary.atoms, y, sigma), sigma=sigma)


def select_top_s(adaptor, s: int) -> np.ndarray:
    """Indices of the ``s`` smallest penalties, ascending; ties keep the lower index."""
    c = adaptor.c if isinstance(adaptor, LocalityAdaptor) else np.asarray(adaptor, dtype=np.float64)
    n = c.size
    if not 1 <= s <= n:
        raise InvalidInputError(f"s must be in [1, {n}], got {s}")
    picked = np.argsort(c, kind="stable")[:s]
    return np.sort(picked)


def subdictionary(dictionary: Dictionary, idx, penalties=None):
    """Restrict atoms (and optionally penalties) to the given distinct indices.

    Dropping a column is the exact limit of sending its penalty to infinity,
    so truncation is implemented by removal rather than by huge penalties.
    """
    idx = np.asarray(idx, dtype=np.intp)
    if idx.ndim != 1 or idx.size == 0:
        raise InvalidInputError("index set must be a nonempty 1-d sequence")
    if np.unique(idx).size != idx.size:
        raise InvalidInputError("index set must be distinct")
    if idx.min() < 0 or idx.max() >= dictionary.n:
        raise InvalidInputError("index out of range")
    sub = Dictionary(
        atoms=dictionary.atoms[:, idx],
        labels=dictionary.labels[idx],
        outside=dictionary.outside[idx],
        frame=dictionary.frame,
    )
    if penalties is None:
        return sub
    c = penalties.c if isinstance(penalties, LocalityAdaptor) else np.asarray(penalties, dtype=np.float64)
    return sub, c[idx]


def augment_with_outside(dictionary: Dictionary, outside: Sequence[Image], frame: Frame) -> Dictionary:
    """Append unit-norm atoms flagged as outside data.

    Outside atoms get one fresh label distinct from every training subject;
    they take part in alignment but are skipped by classification residuals.
    """
    if frame != dictionary.frame:
        raise InvalidInputError("outside images must use the dictionary frame")
    if not outside:
        return dictionary
    extra = np.empty((frame.m, len(outside)), dtype=np.float64)
    for j, img in enumerate(outside):
        if img.width != frame.width or img.height != frame.height:
            raise InvalidInputError(
                f"outside image {j} is {img.width}x{img.height}, frame is {frame.width}x{frame.height}"
            )
        extra[:, j] = vectorize_normalize(img)
    fresh = int(dictionary.labels.max()) + 1 if dictionary.n else 0
    return Dictionary(
        atoms=np.hstack([dictionary.atoms, extra]),
        labels=np.concatenate([dictionary.labels, np.full(len(outside), fresh, dtype=np.int64)]),
        outside=np.concatenate([dictionary.outside, np.ones(len(outside), dtype=bool)]),
        frame=dictionary.frame,
    )


def dictionary_to_bytes(dictionary: Dictionary) -> bytes:
    """Serialize to the binary format (little-endian, column-major float64 atoms)."""
    labels = dictionary.labels
    if labels.size and labels.max() > 0xFFFFFFFF:
        raise InvalidInputError("labels must fit in u32 for serialization")
    head = _MAGIC + struct.pack(
        "<6I",
        _VERSION,
        dictionary.m,
        dictionary.n,
        dictionary.k,
        dictionary.frame.width,
        dictionary.frame.height,
    )
    body = (
        labels.astype("<u4").tobytes()
        + dictionary.outside.astype("<u1").tobytes()
        + dictionary.atoms.astype("<f8").tobytes(order="F")
    )
    return head + body


def dictionary_from_bytes(data: bytes) -> Dictionary:
    """Parse the binary dictionary format; validates sizes and atom norms."""
    if len(data) < len(_MAGIC) + 24 or data[: len(_MAGIC)] != _MAGIC:
        raise DictionaryFormatError("bad magic; not a dictionary file")
    version, m, n, k, fw, fh = struct.unpack_from("<6I", data, len(_MAGIC))
    if version != _VERSION:
        raise DictionaryFormatError(f"unsupported dictionary version {version}")
    off = len(_MAGIC) + 24
    expect = off + 4 * n + n + 8 * m * n
    if len(data) != expect:
        raise DictionaryFormatError(f"truncated dictionary file: {len(data)} bytes, expected {expect}")
    labels = np.frombuffer(data, dtype="<u4", count=n, offset=off).astype(np.int64)
    off += 4 * n
    outside = np.frombuffer(data, dtype="<u1", count=n, offset=off).astype(bool)
    off += n
    atoms = np.frombuffer(data, dtype="<f8", count=m * n, offset=off).reshape((m, n), order="F")
    try:
        d = Dictionary(atoms=atoms, labels=labels, outside=outside, frame=Frame(fw, fh))
    except InvalidInputError as exc:
        raise DictionaryFormatError(f"inconsistent dictionary contents: {exc}") from exc
    if d.k != k:
        raise DictionaryFormatError(f"header claims k={k} subjects, data has {d.k}")
    return d


def save_dictionary(dictionary: Dictionary, path) -> None:
    with open(path, "wb") as fh:
        fh.write(dictionary_to_bytes(dictionary))


def load_dictionary(path) -> Dictionary:
    with open(path, "rb") as fh:
        return dictionary_from_bytes(fh.read())
