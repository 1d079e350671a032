"""BVH parsing, forward kinematics and labeled-dataset loading.

Two motion sources are accepted by :func:`load_dataset`:

* ``.bvh`` files, parsed and run through forward kinematics;
* ``.pos`` raw-positions files: a header line ``J T`` followed by ``T``
  lines of ``3*J`` numbers (x, y, z per joint). These are written by the
  synthetic generator, which has positions but no joint rotations.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

POSITION_CHANNELS = ("Xposition", "Yposition", "Zposition")
ROTATION_CHANNELS = ("Xrotation", "Yrotation", "Zrotation")
VALID_CHANNELS = POSITION_CHANNELS + ROTATION_CHANNELS

CLASS_MAP_NAME = "classes.txt"


class BVHError(ValueError):
    """Malformed BVH input. ``lineno`` is 1-based, or None if not line-specific."""

    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class DatasetError(ValueError):
    pass


@dataclass
class Joint:
    name: str
    parent: int | None
    offset: np.ndarray
    channels: list[str]


@dataclass
class Skeleton:
    joints: list[Joint]

    @property
    def names(self) -> list[str]:
        return [j.name for j in self.joints]

    @property
    def channel_count(self) -> int:
        return sum(len(j.channels) for j in self.joints)

    def channel_slices(self) -> list[slice]:
        out, start = [], 0
        for j in self.joints:
            out.append(slice(start, start + len(j.channels)))
            start += len(j.channels)
        return out


@dataclass
class ChannelData:
    frame_count: int
    frame_time: float
    values: np.ndarray  # (T, total channels)


@dataclass
class MotionSequence:
    positions: np.ndarray  # (T, J, 3)
    joint_names: list[str]

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64)
        if self.positions.ndim != 3 or self.positions.shape[2] != 3:
            raise ValueError(f"positions must be (T, J, 3), got {self.positions.shape}")
        T, J, _ = self.positions.shape
        if T < 1 or J < 1:
            raise ValueError("need at least one frame and one joint")
        if len(self.joint_names) != J:
            raise ValueError(f"{len(self.joint_names)} joint names for {J} joints")
        if not np.all(np.isfinite(self.positions)):
            raise ValueError("positions contain non-finite values")

    @property
    def frame_count(self) -> int:
        return self.positions.shape[0]

    @property
    def joint_count(self) -> int:
        return self.positions.shape[1]


@dataclass
class LabeledSequence:
    motion: MotionSequence
    labels: np.ndarray
    source_id: str = ""

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.labels.shape != (self.motion.frame_count,):
            raise ValueError(
                f"{self.source_id or 'sequence'}: {self.labels.size} labels "
                f"for {self.motion.frame_count} frames"
            )


# -- BVH ---------------------------------------------------------------------


def _floats(tokens, lineno, what):
    try:
        return [float(t) for t in tokens]
    except ValueError:
        raise BVHError(f"expected numbers in {what}", lineno) from None


def parse_bvh(text: str) -> tuple[Skeleton, ChannelData]:
    lines = [(i + 1, ln.split()) for i, ln in enumerate(text.splitlines())]
    lines = [(n, toks) for n, toks in lines if toks]
    pos = 0

    def next_line():
        nonlocal pos
        if pos >= len(lines):
            raise BVHError("unexpected end of file")
        item = lines[pos]
        pos += 1
        return item

    n, toks = next_line()
    if toks != ["HIERARCHY"]:
        raise BVHError("expected HIERARCHY", n)

    joints: list[Joint] = []
    # stack entries: joint index, or None for an End Site block
    stack: list[int | None] = []

    n, toks = next_line()
    if toks[0] != "ROOT" or len(toks) != 2:
        raise BVHError("expected 'ROOT <name>'", n)
    pending = (toks[1], None)

    while True:
        if pending is not None:
            name, parent = pending
            pending = None
            n, toks = next_line()
            if toks != ["{"]:
                raise BVHError("expected '{'", n)
            n, toks = next_line()
            if toks[0] != "OFFSET" or len(toks) != 4:
                raise BVHError("expected 'OFFSET x y z'", n)
            offset = np.array(_floats(toks[1:], n, "OFFSET"))
            n, toks = next_line()
            if toks[0] != "CHANNELS" or len(toks) < 2:
                raise BVHError("expected 'CHANNELS n ...'", n)
            try:
                count = int(toks[1])
            except ValueError:
                raise BVHError("channel count is not an integer", n) from None
            names = toks[2:]
            if count != len(names):
                raise BVHError(f"CHANNELS declares {count} channels but lists {len(names)}", n)
            if count not in (3, 6):
                raise BVHError(f"channel count must be 3 or 6, got {count}", n)
            for c in names:
                if c not in VALID_CHANNELS:
                    raise BVHError(f"unknown channel {c!r}", n)
            joints.append(Joint(name, parent, offset, names))
            stack.append(len(joints) - 1)
            continue

        n, toks = next_line()
        head = toks[0]
        if head == "JOINT":
            if len(toks) != 2:
                raise BVHError("expected 'JOINT <name>'", n)
            if not stack or stack[-1] is None:
                raise BVHError("JOINT outside a joint block", n)
            pending = (toks[1], stack[-1])
        elif head == "End":
            if toks != ["End", "Site"]:
                raise BVHError("expected 'End Site'", n)
            n, toks = next_line()
            if toks != ["{"]:
                raise BVHError("expected '{'", n)
            n, toks = next_line()
            if toks[0] != "OFFSET" or len(toks) != 4:
                raise BVHError("expected 'OFFSET x y z'", n)
            _floats(toks[1:], n, "OFFSET")
            stack.append(None)
        elif head == "}":
            if not stack:
                raise BVHError("unbalanced '}'", n)
            stack.pop()
            if not stack:
                break
        else:
            raise BVHError(f"unexpected token {head!r}", n)

    n, toks = next_line()
    if toks != ["MOTION"]:
        raise BVHError("expected MOTION", n)
    n, toks = next_line()
    if toks[0] != "Frames:" or len(toks) != 2:
        raise BVHError("expected 'Frames: <n>'", n)
    try:
        frame_count = int(toks[1])
    except ValueError:
        raise BVHError("frame count is not an integer", n) from None
    n, toks = next_line()
    if toks[:2] != ["Frame", "Time:"] or len(toks) != 3:
        raise BVHError("expected 'Frame Time: <seconds>'", n)
    frame_time = _floats(toks[2:], n, "Frame Time")[0]
    if not frame_time > 0:
        raise BVHError("frame time must be positive", n)

    skeleton = Skeleton(joints)
    width = skeleton.channel_count
    rows = lines[pos:]
    if len(rows) != frame_count:
        raise BVHError(f"header declares {frame_count} frames but {len(rows)} data lines follow")
    values = np.zeros((frame_count, width))
    for i, (n, toks) in enumerate(rows):
        if len(toks) != width:
            raise BVHError(f"frame has {len(toks)} values, skeleton has {width} channels", n)
        values[i] = _floats(toks, n, "frame data")
    return skeleton, ChannelData(frame_count, frame_time, values)


def _axis_rotation(axis: str, radians: np.ndarray) -> np.ndarray:
    c, s = np.cos(radians), np.sin(radians)
    one, zero = np.ones_like(c), np.zeros_like(c)
    if axis == "X":
        rows = [[one, zero, zero], [zero, c, -s], [zero, s, c]]
    elif axis == "Y":
        rows = [[c, zero, s], [zero, one, zero], [-s, zero, c]]
    else:
        rows = [[c, -s, zero], [s, c, zero], [zero, zero, one]]
    return np.moveaxis(np.array(rows), (0, 1), (-2, -1))


def forward_kinematics(skeleton: Skeleton, data: ChannelData) -> MotionSequence:
    """Global joint positions, shape (T, J, 3).

    Rotation channels compose intrinsically in declared order, so
    ``Zrotation Xrotation Yrotation`` gives ``Rz @ Rx @ Ry``.
    """
    values = np.asarray(data.values, dtype=np.float64)
    if values.ndim != 2 or values.shape[1] != skeleton.channel_count:
        raise ValueError(
            f"channel data width {values.shape[-1]} does not match skeleton ({skeleton.channel_count})"
        )
    T, J = values.shape[0], len(skeleton.joints)
    positions = np.zeros((T, J, 3))
    rotations = np.zeros((T, J, 3, 3))
    eye = np.broadcast_to(np.eye(3), (T, 3, 3))

    for j, (joint, sl) in enumerate(zip(skeleton.joints, skeleton.channel_slices())):
        local = values[:, sl]
        translation = np.zeros((T, 3))
        rot = eye
        for k, ch in enumerate(joint.channels):
            if ch in POSITION_CHANNELS:
                translation[:, POSITION_CHANNELS.index(ch)] = local[:, k]
            else:
                rot = rot @ _axis_rotation(ch[0], np.deg2rad(local[:, k]))
        rel = joint.offset + translation
        if joint.parent is None:
            positions[:, j] = rel
            rotations[:, j] = rot
        else:
            p = joint.parent
            positions[:, j] = np.einsum("tij,tj->ti", rotations[:, p], rel) + positions[:, p]
            rotations[:, j] = rotations[:, p] @ rot
    return MotionSequence(positions, skeleton.names)


def load_bvh(path) -> MotionSequence:
    path = Path(path)
    try:
        skeleton, data = parse_bvh(path.read_text())
    except BVHError as e:
        raise BVHError(f"{path}: {e}") from None
    return forward_kinematics(skeleton, data)


# -- raw positions -----------------------------------------------------------


def write_positions(path, seq: MotionSequence) -> None:
    T, J, _ = seq.positions.shape
    flat = seq.positions.reshape(T, 3 * J)
    lines = [f"{J} {T}"]
    lines += [" ".join(repr(float(v)) for v in row) for row in flat]
    Path(path).write_text("\n".join(lines) + "\n")


def read_positions(path) -> MotionSequence:
    path = Path(path)
    rows = [ln.split() for ln in path.read_text().splitlines() if ln.strip()]
    if not rows or len(rows[0]) != 2:
        raise DatasetError(f"{path}: expected header 'J T'")
    J, T = int(rows[0][0]), int(rows[0][1])
    if len(rows) - 1 != T:
        raise DatasetError(f"{path}: header declares {T} frames, found {len(rows) - 1}")
    data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=np.float64)
    if data.shape != (T, 3 * J):
        raise DatasetError(f"{path}: expected {3 * J} values per frame")
    return MotionSequence(data.reshape(T, J, 3), [f"joint{j}" for j in range(J)])


def load_motion(path) -> MotionSequence:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    if path.suffix.lower() == ".pos":
        return read_positions(path)
    return load_bvh(path)


# -- labels / manifest -------------------------------------------------------


def read_labels(path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    out = []
    for i, ln in enumerate(path.read_text().splitlines(), 1):
        if not ln.strip():
            continue
        try:
            out.append(int(ln))
        except ValueError:
            raise DatasetError(f"{path}: line {i}: not an integer class id") from None
    return np.array(out, dtype=np.int64)


def write_labels(path, labels) -> None:
    Path(path).write_text("".join(f"{int(v)}\n" for v in labels))


def read_class_map(path) -> dict[int, str]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    classes = {}
    for ln in path.read_text().splitlines():
        if not ln.strip():
            continue
        idx, _, name = ln.partition("\t")
        classes[int(idx)] = name.strip()
    if sorted(classes) != list(range(len(classes))):
        raise DatasetError(f"{path}: class ids must be 0..K-1")
    return classes


def write_class_map(path, names) -> None:
    Path(path).write_text("".join(f"{i}\t{n}\n" for i, n in enumerate(names)))


def class_map_path(manifest_path) -> Path:
    return Path(manifest_path).parent / CLASS_MAP_NAME


def load_dataset(manifest_path) -> list[LabeledSequence]:
    """Load every (motion, labels) pair listed in a manifest, in manifest order.

    Relative paths resolve against the manifest's directory. The class
    count comes from the ``classes.txt`` file next to the manifest.
    """
    manifest_path = Path(manifest_path)
    if not manifest_path.exists():
        raise FileNotFoundError(f"no such file: {manifest_path}")
    K = len(read_class_map(class_map_path(manifest_path)))
    base = manifest_path.parent
    out = []
    for i, ln in enumerate(manifest_path.read_text().splitlines(), 1):
        if not ln.strip():
            continue
        parts = ln.split("\t")
        if len(parts) != 2:
            raise DatasetError(f"{manifest_path}: line {i}: expected 'motion<TAB>labels'")
        motion_path, label_path = (base / p.strip() for p in parts)
        motion = load_motion(motion_path)
        labels = read_labels(label_path)
        if labels.size != motion.frame_count:
            raise DatasetError(
                f"{label_path}: {labels.size} labels for {motion.frame_count} frames"
            )
        bad = (labels < 0) | (labels >= K)
        if bad.any():
            raise DatasetError(
                f"{label_path}: class id {int(labels[bad][0])} outside [0, {K})"
            )
        out.append(LabeledSequence(motion, labels, str(motion_path)))
    return out
