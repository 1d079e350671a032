"""Checkpoint container.

Layout::

    b"MOTIONSEG-CKPT\\n"
    <header length as ASCII decimal>\\n
    <UTF-8 JSON header>
    <raw little-endian float64 tensors, concatenated in header["tensors"] order>

The header carries ``format_version``, the network config, the scaling
spec used at training time, Adam hyperparameters and step count, and each
tensor's name and shape. Bytes are a pure function of the contents, so equal
checkpoints compare equal with ``cmp``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .motion_image import ScalingSpec
from .network import NetworkConfig, param_shapes
from .optimizer import AdamHyper, AdamState

MAGIC = b"MOTIONSEG-CKPT\n"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    config: NetworkConfig
    params: dict[str, np.ndarray]
    scaling: ScalingSpec | None = None
    hyper: AdamHyper | None = None
    state: AdamState | None = None


def dumps(ckpt: Checkpoint) -> bytes:
    order = list(param_shapes(ckpt.config))
    tensors = [(k, ckpt.params[k]) for k in order]
    if ckpt.state is not None:
        tensors += [(f"adam.m.{k}", ckpt.state.m[k]) for k in order]
        tensors += [(f"adam.v.{k}", ckpt.state.v[k]) for k in order]
    header = {
        "format_version": FORMAT_VERSION,
        "config": ckpt.config.to_dict(),
        "scaling": ckpt.scaling.to_dict() if ckpt.scaling is not None else None,
        "adam_hyper": asdict(ckpt.hyper) if ckpt.hyper is not None else None,
        "adam_t": ckpt.state.t if ckpt.state is not None else None,
        "tensors": [[name, list(arr.shape)] for name, arr in tensors],
    }
    head = json.dumps(header, sort_keys=True).encode()
    body = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for _, a in tensors)
    return MAGIC + f"{len(head)}\n".encode() + head + body


def loads(data: bytes) -> Checkpoint:
    if not data.startswith(MAGIC):
        raise CheckpointError("not a motionseg checkpoint")
    rest = data[len(MAGIC) :]
    nl = rest.index(b"\n")
    n = int(rest[:nl])
    header = json.loads(rest[nl + 1 : nl + 1 + n])
    version = header.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    body = memoryview(rest[nl + 1 + n :])
    tensors, offset = {}, 0
    for name, shape in header["tensors"]:
        size = int(np.prod(shape)) * 8
        if offset + size > len(body):
            raise CheckpointError("checkpoint truncated")
        tensors[name] = np.frombuffer(body[offset : offset + size], dtype="<f8").reshape(shape).astype(np.float64)
        offset += size
    if offset != len(body):
        raise CheckpointError("trailing bytes after tensors")

    config = NetworkConfig.from_dict(header["config"])
    order = list(param_shapes(config))
    params = {k: tensors[k] for k in order}
    state = None
    if header["adam_t"] is not None:
        state = AdamState(
            {k: tensors[f"adam.m.{k}"] for k in order},
            {k: tensors[f"adam.v.{k}"] for k in order},
            int(header["adam_t"]),
        )
    return Checkpoint(
        config,
        params,
        ScalingSpec.from_dict(header["scaling"]) if header["scaling"] else None,
        AdamHyper(**header["adam_hyper"]) if header["adam_hyper"] else None,
        state,
    )


def save(path, ckpt: Checkpoint) -> None:
    Path(path).write_bytes(dumps(ckpt))


def load(path) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    return loads(path.read_bytes())
