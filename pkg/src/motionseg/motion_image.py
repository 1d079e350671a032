"""RGB motion images: rows are joints, columns are frames, channels are scaled XYZ."""

from __future__ import annotations

import colorsys
from dataclasses import dataclass

import numpy as np

from .ingest import MotionSequence


@dataclass
class ScalingSpec:
    minimum: np.ndarray  # (3,) per-axis
    maximum: np.ndarray

    def __post_init__(self):
        self.minimum = np.asarray(self.minimum, dtype=np.float64).reshape(3)
        self.maximum = np.asarray(self.maximum, dtype=np.float64).reshape(3)
        if np.any(self.maximum < self.minimum):
            raise ValueError("scaling max must be >= min on every axis")

    @property
    def degenerate(self) -> np.ndarray:
        return self.maximum == self.minimum

    def to_dict(self) -> dict:
        return {"min": self.minimum.tolist(), "max": self.maximum.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "ScalingSpec":
        return cls(d["min"], d["max"])


@dataclass
class MotionImage:
    values: np.ndarray  # (3, J, T) in [0, 1]
    joint_names: list[str]

    @property
    def joint_count(self) -> int:
        return self.values.shape[1]

    @property
    def frame_count(self) -> int:
        return self.values.shape[2]

    def flat(self) -> np.ndarray:
        """Network input of shape (3*J, T), channel index ``3*j + axis``."""
        _, J, T = self.values.shape
        return self.values.transpose(1, 0, 2).reshape(3 * J, T)


def fit_scaling(sequences) -> ScalingSpec:
    sequences = list(sequences)
    if not sequences:
        raise ValueError("cannot fit scaling on zero sequences")
    lo = np.min([s.positions.min(axis=(0, 1)) for s in sequences], axis=0)
    hi = np.max([s.positions.max(axis=(0, 1)) for s in sequences], axis=0)
    return ScalingSpec(lo, hi)


def encode(seq: MotionSequence, spec: ScalingSpec) -> MotionImage:
    span = spec.maximum - spec.minimum
    degenerate = spec.degenerate
    safe = np.where(degenerate, 1.0, span)
    scaled = np.clip((seq.positions - spec.minimum) / safe, 0.0, 1.0)
    scaled[..., degenerate] = 0.5
    # (T, J, 3) -> (3, J, T)
    return MotionImage(np.ascontiguousarray(scaled.transpose(2, 1, 0)), list(seq.joint_names))


def decode(img: MotionImage, spec: ScalingSpec) -> MotionSequence:
    values = img.values.transpose(2, 1, 0)
    span = np.where(spec.degenerate, 0.0, spec.maximum - spec.minimum)
    return MotionSequence(values * span + spec.minimum, list(img.joint_names))


def _quantize(v: np.ndarray) -> np.ndarray:
    # round half away from zero; v is non-negative here
    return np.floor(np.clip(v, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def ppm_bytes(rgb: np.ndarray) -> bytes:
    """Binary P6 encoding of an (H, W, 3) uint8 array."""
    rgb = np.asarray(rgb, dtype=np.uint8)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) array, got {rgb.shape}")
    h, w, _ = rgb.shape
    return f"P6\n{w} {h}\n255\n".encode("ascii") + rgb.tobytes()


def render_image(img: MotionImage, scale: int = 1) -> bytes:
    if scale < 1:
        raise ValueError("scale must be >= 1")
    rgb = _quantize(img.values.transpose(1, 2, 0))  # (J, T, 3)
    rgb = np.repeat(np.repeat(rgb, scale, axis=0), scale, axis=1)
    return ppm_bytes(rgb)


def render_label_strip(labels, palette, height: int = 1) -> bytes:
    labels = np.asarray(labels, dtype=np.int64)
    palette = np.asarray(palette, dtype=np.uint8).reshape(-1, 3)
    if height < 1:
        raise ValueError("height must be >= 1")
    if labels.size and (labels.min() < 0 or labels.max() >= len(palette)):
        bad = labels[(labels < 0) | (labels >= len(palette))][0]
        raise ValueError(f"label {int(bad)} has no palette entry ({len(palette)} colors)")
    row = palette[labels]
    return ppm_bytes(np.repeat(row[None], height, axis=0))


_BASE_PALETTE = [
    (31, 119, 180), (255, 127, 14), (44, 160, 44), (214, 39, 40), (148, 103, 189),
    (140, 86, 75), (227, 119, 194), (127, 127, 127), (188, 189, 34), (23, 190, 207),
]


def default_palette(n: int) -> list[tuple[int, int, int]]:
    if n <= len(_BASE_PALETTE):
        return _BASE_PALETTE[:n]
    out = list(_BASE_PALETTE)
    for i in range(n - len(out)):
        r, g, b = colorsys.hsv_to_rgb((i * 0.618034) % 1.0, 0.65, 0.9)
        out.append((round(r * 255), round(g * 255), round(b * 255)))
    return out
