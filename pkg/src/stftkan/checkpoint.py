"""Binary model checkpoints.

Layout (little-endian)::

    b"SKCK"  u32 version  u8 variant
    u32 num_classes, in_dim, hidden, edge_out, emb_dims, k, fourier_grid
    5 x STFT layer spec (ecl1, ecl2, fel, cl, hybrid_cl):
        u32 grid_size, window_size, stride; u8 smooth_init, window, use_bias; f32 beta
    u32 tensor count
    per tensor, in layer then parameter order: u32 element count, float32 data
"""

from __future__ import annotations

import io
import struct
from pathlib import Path

import numpy as np

from .errors import CheckpointError
from .model import STAGES, Architecture, LiteDgcnn, StftLayerSpec, Variant
from .windows import WindowKind

MAGIC = b"SKCK"
VERSION = 1
_SPEC = struct.Struct("<IIIBBBf")
_HEAD = struct.Struct("<7I")


def _spec_order(arch: Architecture) -> list[StftLayerSpec]:
    return [arch.stft[s] for s in STAGES] + [arch.hybrid_cl]


def dumps(model: LiteDgcnn) -> bytes:
    arch = model.arch
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<IB", VERSION, int(model.variant)))
    buf.write(_HEAD.pack(model.num_classes, arch.in_dim, arch.hidden, arch.edge_out,
                         arch.emb_dims, arch.k, arch.fourier_grid))
    for spec in _spec_order(arch):
        buf.write(_SPEC.pack(spec.grid_size, spec.window_size, spec.stride, int(spec.smooth_init),
                             int(spec.window), int(spec.use_bias), spec.beta))
    params = model.parameters()
    buf.write(struct.pack("<I", len(params)))
    for value in params.values():
        buf.write(struct.pack("<I", value.size))
        buf.write(np.ascontiguousarray(value, dtype="<f4").tobytes())
    return buf.getvalue()


def loads(raw: bytes, expect_variant=None) -> LiteDgcnn:
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(raw):
            raise CheckpointError(f"checkpoint truncated at byte {pos}")
        chunk = raw[pos:pos + n]
        pos += n
        return chunk

    if take(4) != MAGIC:
        raise CheckpointError("bad magic, not a model checkpoint")
    version, tag = struct.unpack("<IB", take(5))
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    try:
        variant = Variant(tag)
    except ValueError:
        raise CheckpointError(f"unknown variant tag {tag}") from None
    if expect_variant is not None and Variant.parse(expect_variant) != variant:
        raise CheckpointError(f"checkpoint holds a {variant.label} model, expected {Variant.parse(expect_variant).label}")
    num_classes, in_dim, hidden, edge_out, emb_dims, k, fourier_grid = _HEAD.unpack(take(_HEAD.size))
    specs = []
    for _ in range(len(STAGES) + 1):
        g, w, s, smooth, window, bias, beta = _SPEC.unpack(take(_SPEC.size))
        try:
            specs.append(StftLayerSpec(g, w, s, bool(smooth), WindowKind(window), float(beta), bool(bias)))
        except ValueError as exc:
            raise CheckpointError(f"invalid layer spec: {exc}") from None
    arch = Architecture(in_dim=in_dim, hidden=hidden, edge_out=edge_out, emb_dims=emb_dims, k=k,
                        stft=dict(zip(STAGES, specs[:-1])), hybrid_cl=specs[-1], fourier_grid=fourier_grid)
    try:
        model = LiteDgcnn(variant, num_classes, None, arch)
    except Exception as exc:
        raise CheckpointError(f"checkpoint config cannot be built: {exc}") from exc
    (count,) = struct.unpack("<I", take(4))
    params = model.parameters()
    if count != len(params):
        raise CheckpointError(f"checkpoint has {count} tensors, model expects {len(params)}")
    for name, target in params.items():
        (size,) = struct.unpack("<I", take(4))
        if size != target.size:
            raise CheckpointError(f"tensor {name}: {size} values, expected {target.size}")
        target[...] = np.frombuffer(take(4 * size), dtype="<f4").reshape(target.shape)
    if pos != len(raw):
        raise CheckpointError(f"{len(raw) - pos} trailing bytes in checkpoint")
    return model


def save(model: LiteDgcnn, path) -> None:
    Path(path).write_bytes(dumps(model))


def load(path, expect_variant=None) -> LiteDgcnn:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    return loads(raw, expect_variant)
