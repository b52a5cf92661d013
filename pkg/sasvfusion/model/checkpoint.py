"""Binary checkpoint codec.

Layout (little-endian):
    magic "SAGA" | u32 version
    config: u8 strategy | u32 asv_dim, cm_dim, hidden_cm, hidden_asv, hidden_post
            | u8 flags (bn, relu-activation, unshared tReLU, diagonal tReLU, test-only CM input)
            | f64 dropout_rate, bn_momentum, bn_eps | u64 seed
    u32 block count, then per block:
            u8 kind (0 CmPath, 1 AsvPath, 2 Joint, 3 running statistic)
            | u16 name length + UTF-8 name | u8 ndim | u32 shape[ndim] | f64 values
Parameter blocks follow group order; running statistics come last, sorted by name.
"""
import math
import struct
from pathlib import Path

import numpy as np

from sasvfusion.exceptions import (
    BadMagicError,
    ContractViolation,
    CorruptRecordError,
    DimensionMismatchError,
    TruncatedFileError,
    VersionMismatchError,
)
from sasvfusion.logger import get_logger
from sasvfusion.model.fusion import FusionModel, GroupTag, ModelConfig, Strategy, build_model, parameter_shapes

logger = get_logger(__name__)

MAGIC = b"SAGA"
VERSION = 1
_KINDS = [GroupTag.CM_PATH, GroupTag.ASV_PATH, GroupTag.JOINT]
_BUFFER_KIND = 3
_STRATEGIES = [Strategy.S1, Strategy.S2, Strategy.S3]
_CONFIG = struct.Struct("<B5IB3dQ")


def _flags(cfg):
    return (int(cfg.use_batchnorm)
            | int(cfg.activation == "relu") << 1
            | int(not cfg.share_trelu) << 2
            | int(cfg.diagonal_trelu) << 3
            | int(cfg.cm_input == "test") << 4)


def _block(kind, name, arr):
    encoded = name.encode("utf-8")
    arr = np.ascontiguousarray(arr, dtype="<f8")
    return b"".join([
        struct.pack("<BH", kind, len(encoded)), encoded,
        struct.pack("<B", arr.ndim), struct.pack(f"<{arr.ndim}I", *arr.shape),
        arr.tobytes(),
    ])


def checkpoint_bytes(model: FusionModel) -> bytes:
    cfg = model.config
    parts = [MAGIC, struct.pack("<I", VERSION), _CONFIG.pack(
        _STRATEGIES.index(cfg.strategy), cfg.asv_dim, cfg.cm_dim, cfg.hidden_cm, cfg.hidden_asv,
        cfg.hidden_post, _flags(cfg), cfg.dropout_rate, cfg.bn_momentum, cfg.bn_eps, cfg.seed)]
    blocks = [_block(kind, name, model.params[name])
              for kind, tag in enumerate(_KINDS) for name in model.groups[tag].names]
    blocks += [_block(_BUFFER_KIND, name, model.buffers[name]) for name in sorted(model.buffers)]
    parts.append(struct.pack("<I", len(blocks)))
    parts.extend(blocks)
    return b"".join(parts)


def save_checkpoint(model: FusionModel, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(checkpoint_bytes(model))
    logger.info(f"Checkpoint written to {path}")
    return path


class _Reader:
    def __init__(self, data):
        self.data = data
        self.offset = 0

    def take(self, n, what):
        if self.offset + n > len(self.data):
            raise TruncatedFileError(f"checkpoint truncated while reading {what}", self.offset)
        chunk = self.data[self.offset:self.offset + n]
        self.offset += n
        return chunk

    def unpack(self, fmt, what):
        s = struct.Struct(fmt)
        return s.unpack(self.take(s.size, what))


def _read_blocks(r, count):
    """Parse ``count`` blocks; value payloads are bounded by the bytes actually present."""
    blocks = []
    for _ in range(count):
        block_offset = r.offset
        kind, name_len = r.unpack("<BH", "block header")
        raw_name = r.take(name_len, "block name")
        try:
            name = raw_name.decode("utf-8")
        except UnicodeDecodeError:
            raise CorruptRecordError("block name is not valid UTF-8", block_offset) from None
        (ndim,) = r.unpack("<B", "block rank")
        shape = r.unpack(f"<{ndim}I", "block shape")
        size = math.prod(shape)
        values = np.frombuffer(r.take(8 * size, f"values of {name}"), dtype="<f8").reshape(shape)
        blocks.append((block_offset, kind, name, values))
    return blocks


def _check_blocks(blocks, expected_params, expected_buffers):
    seen = set()
    for block_offset, kind, name, values in blocks:
        if kind == _BUFFER_KIND:
            expected = expected_buffers.get(name)
        elif kind < len(_KINDS) and name in expected_params and expected_params[name][0] == _KINDS[kind]:
            expected = expected_params[name][1]
        else:
            expected = None
        if expected is None or name in seen:
            raise CorruptRecordError(f"unexpected block '{name}'", block_offset)
        if tuple(expected) != values.shape:
            raise DimensionMismatchError(
                f"block '{name}' has shape {values.shape}, model expects {tuple(expected)}", block_offset)
        seen.add(name)
    return seen


def model_from_bytes(data: bytes) -> FusionModel:
    """Decode a checkpoint. Every block is checked against the header's architecture
    before any parameter array is allocated."""
    r = _Reader(data)
    if r.take(4, "magic") != MAGIC:
        raise BadMagicError("not a checkpoint: bad magic", 0)
    (version,) = r.unpack("<I", "version")
    if version != VERSION:
        raise VersionMismatchError(f"checkpoint version {version} is not supported (expected {VERSION})", 4)
    cfg_offset = r.offset
    (strategy, asv_dim, cm_dim, hidden_cm, hidden_asv, hidden_post, flags,
     dropout_rate, bn_momentum, bn_eps, seed) = r.unpack(_CONFIG.format, "model config")
    if strategy >= len(_STRATEGIES):
        raise CorruptRecordError(f"unknown strategy code {strategy}", cfg_offset)
    try:
        cfg = ModelConfig(
            strategy=_STRATEGIES[strategy], asv_dim=asv_dim, cm_dim=cm_dim, hidden_cm=hidden_cm,
            hidden_asv=hidden_asv, hidden_post=hidden_post, use_batchnorm=bool(flags & 1),
            dropout_rate=dropout_rate, seed=seed, activation="relu" if flags & 2 else "trelu",
            share_trelu=not flags & 4, diagonal_trelu=bool(flags & 8),
            cm_input="test" if flags & 16 else "both", bn_momentum=bn_momentum, bn_eps=bn_eps,
        )
    except ContractViolation as exc:
        raise CorruptRecordError(f"invalid model config: {exc}", cfg_offset) from None
    expected_params, expected_buffers = parameter_shapes(cfg)
    (count,) = r.unpack("<I", "block count")
    blocks = _read_blocks(r, count)
    seen = _check_blocks(blocks, expected_params, expected_buffers)
    missing = (set(expected_params) | set(expected_buffers)) - seen
    if missing:
        raise TruncatedFileError(f"checkpoint lacks blocks {sorted(missing)}", r.offset)
    if r.offset != len(data):
        raise CorruptRecordError("trailing bytes after the last block", r.offset)
    model = build_model(cfg)
    for _, kind, name, values in blocks:
        target = model.buffers if kind == _BUFFER_KIND else model.params
        target[name] = values.astype(np.float64)
    return model


def load_checkpoint(path) -> FusionModel:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"File '{path}' not found.")
    model = model_from_bytes(path.read_bytes())
    logger.info(f"Checkpoint loaded from {path} ({model.config.strategy.value}, {model.num_parameters()} parameters)")
    return model
