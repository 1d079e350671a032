"""Deterministic synthetic labeled motion.

Each sequence is a run of random-length segments. Inside a segment of class
``c`` every joint coordinate follows

    A[c, j, a] * sin(2*pi * f[c] * t / T + phi[c, j, a]) + drift + noise

where ``t`` is the global frame index and ``T`` the sequence length. The
frequency table ``f`` is class-distinct, so a single frame is ambiguous and
classes are told apart by how the signal evolves over time. ``drift`` is a
per-sequence offset plus linear ramp that carries no class information.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .ingest import LabeledSequence, MotionSequence, write_class_map, write_labels, write_positions

MAX_RETRIES = 100


@dataclass(frozen=True)
class SynthSpec:
    n_sequences: int = 30
    min_frames: int = 180
    max_frames: int = 220
    J: int = 8
    K: int = 5
    min_segment: int = 20
    max_segment: int = 50
    noise_std: float = 0.05
    drift: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.n_sequences < 1:
            raise ValueError("n_sequences must be >= 1")
        if not 1 <= self.min_frames <= self.max_frames:
            raise ValueError("need 1 <= min_frames <= max_frames")
        if self.J < 1:
            raise ValueError("J must be >= 1")
        if self.K < 2:
            raise ValueError("K must be >= 2")
        if not 1 <= self.min_segment <= self.max_segment:
            raise ValueError("need 1 <= min_segment <= max_segment")
        if self.noise_std < 0 or self.drift < 0:
            raise ValueError("noise_std and drift must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ClassTables:
    frequency: np.ndarray  # (K,) cycles per sequence
    amplitude: np.ndarray  # (K, J, 3)
    phase: np.ndarray  # (K, J, 3)


def class_tables(spec: SynthSpec) -> ClassTables:
    rng = np.random.default_rng([spec.seed, 0])
    frequency = 6.0 + 4.0 * np.arange(spec.K)
    amplitude = rng.uniform(0.5, 1.5, size=(spec.K, spec.J, 3))
    phase = rng.uniform(0.0, 2 * np.pi, size=(spec.K, spec.J, 3))
    return ClassTables(frequency, amplitude, phase)


def amplitude_bound(spec: SynthSpec) -> float:
    """Upper bound on any generated coordinate's magnitude."""
    return 1.5 + spec.drift + 6.0 * spec.noise_std


def _segments(rng, T, spec):
    labels = np.empty(T, dtype=np.int64)
    start = 0
    prev = -1
    while start < T:
        length = int(rng.integers(spec.min_segment, spec.max_segment + 1))
        c = int(rng.integers(spec.K))
        if c == prev:
            c = (c + 1 + int(rng.integers(spec.K - 1))) % spec.K
        labels[start : start + length] = c
        prev = c
        start += length
    return labels


def _sequence(rng, spec, tables, index):
    T = int(rng.integers(spec.min_frames, spec.max_frames + 1))
    labels = _segments(rng, T, spec)
    t = np.arange(T, dtype=np.float64)
    A = tables.amplitude[labels]  # (T, J, 3)
    phi = tables.phase[labels]
    f = tables.frequency[labels][:, None, None]
    signal = A * np.sin(2 * np.pi * f * (t / T)[:, None, None] + phi)
    # offset + ramp, |offset| + |slope| <= drift
    split = rng.uniform(0.0, 1.0, size=(spec.J, 3))
    offset = spec.drift * split * rng.choice([-1.0, 1.0], size=(spec.J, 3))
    slope = spec.drift * (1.0 - split) * rng.choice([-1.0, 1.0], size=(spec.J, 3))
    drift = offset + slope * (t / T)[:, None, None]
    noise = np.clip(rng.normal(0.0, 1.0, size=(T, spec.J, 3)), -6.0, 6.0) * spec.noise_std
    motion = MotionSequence(signal + drift + noise, [f"joint{j}" for j in range(spec.J)])
    return LabeledSequence(motion, labels, f"synth{index:03d}")


def generate(spec: SynthSpec) -> list[LabeledSequence]:
    tables = class_tables(spec)
    for attempt in range(MAX_RETRIES + 1):
        rng = np.random.default_rng([spec.seed, 1, attempt])
        data = [_sequence(rng, spec, tables, i) for i in range(spec.n_sequences)]
        seen = np.unique(np.concatenate([s.labels for s in data]))
        if seen.size == spec.K:
            return data
    raise RuntimeError(
        f"could not cover all {spec.K} classes in {MAX_RETRIES} retries; "
        "increase n_sequences or frame counts"
    )


def export(data, out_dir, class_names=None) -> Path:
    """Write ``data`` as ``.pos`` + label files and a manifest; return the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = []
    for i, seq in enumerate(data):
        stem = f"seq{i:03d}"
        write_positions(out_dir / f"{stem}.pos", seq.motion)
        write_labels(out_dir / f"{stem}.labels", seq.labels)
        lines.append(f"{stem}.pos\t{stem}.labels\n")
    if class_names is None:
        K = int(max(s.labels.max() for s in data)) + 1
        class_names = [f"class{c}" for c in range(K)]
    write_class_map(out_dir / "classes.txt", class_names)
    manifest = out_dir / "manifest.tsv"
    manifest.write_text("".join(lines))
    return manifest
