"""Supervised samples from simulated slots, input standardization, and the GFRA file format.

File layout (all little-endian)::

    header  magic "GFRA" | u16 version | u32 K | u32 L | u32 N | u32 M
            | u32 epsilon*1e6 | u64 sample_count | u8 fading_mode | u64 seed
    record  u32 slot_id | u32 ap_index | u32 block_id
            | 2NL x f32 features | ceil(K/8) bytes of labels (LSB-first packed bits)

Features hold the real parts of ``Y`` antenna by antenna, then the imaginary
parts in the same order.
"""

from __future__ import annotations

import csv
import io
import os
import struct
import warnings
from dataclasses import dataclass

import numpy as np

from .numerics import SeededRng
from .system import Deployment

__all__ = [
    "DatasetFormatError",
    "Dataset",
    "FeatureScaler",
    "AP_POLICIES",
    "extract_features",
    "features_to_matrix",
    "generate_dataset",
    "fit_scaler",
    "apply_scaler",
    "write_dataset",
    "read_dataset",
]

MAGIC = b"GFRA"
VERSION = 1
_HEADER = struct.Struct("<4sHIIIIIQBQ")
_RECORD_META = struct.Struct("<III")
_FADING_CODES = {"per-slot": 0, "fixed": 1}

AP_POLICIES = ("uniform-random-ap", "dominant-random-user", "all-aps")


class DatasetFormatError(ValueError):
    pass


def extract_features(Y: np.ndarray) -> np.ndarray:
    """Flatten ``Y`` (L x N, or a stack ... x L x N) into 2NL reals."""
    Y = np.asarray(Y)
    if Y.ndim < 2:
        raise ValueError(f"expected an L x N matrix, got shape {Y.shape}")
    swapped = np.swapaxes(Y, -1, -2)  # ... x N x L
    lead = Y.shape[:-2]
    re = swapped.real.reshape(*lead, -1)
    im = swapped.imag.reshape(*lead, -1)
    return np.concatenate([re, im], axis=-1)


def features_to_matrix(features: np.ndarray, L: int, N: int) -> np.ndarray:
    """Inverse of :func:`extract_features`."""
    f = np.asarray(features)
    if f.shape[-1] != 2 * N * L:
        raise ValueError(f"feature length {f.shape[-1]} != 2NL = {2 * N * L}")
    lead = f.shape[:-1]
    re = f[..., : N * L].reshape(*lead, N, L)
    im = f[..., N * L:].reshape(*lead, N, L)
    return np.swapaxes(re + 1j * im, -1, -2)


@dataclass
class Dataset:
    K: int
    L: int
    N: int
    M: int
    epsilon: float
    fading_mode: str
    seed: int
    features: np.ndarray  # (n, 2NL) float32
    labels: np.ndarray  # (n, K) uint8
    ap_index: np.ndarray  # (n,) uint32
    block_id: np.ndarray  # (n,) uint32
    slot_id: np.ndarray  # (n,) uint32

    def __len__(self) -> int:
        return self.features.shape[0]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(
            self.K, self.L, self.N, self.M, self.epsilon, self.fading_mode, self.seed,
            self.features[idx], self.labels[idx], self.ap_index[idx], self.block_id[idx], self.slot_id[idx],
        )

    def split_by_slot(self, val_fraction: float, rng: SeededRng) -> tuple["Dataset", "Dataset"]:
        """Train/validation split on slot ids so samples of one slot never straddle the split."""
        slots = np.unique(self.slot_id)
        n_val = max(1, int(round(val_fraction * slots.size)))
        if n_val >= slots.size:
            raise ValueError("validation split would leave no training slots")
        val_slots = np.sort(slots[rng.permutation(slots.size)[:n_val]])
        is_val = np.isin(self.slot_id, val_slots)
        return self.subset(np.flatnonzero(~is_val)), self.subset(np.flatnonzero(is_val))

    def to_csv(self, limit: int | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        d = self.features.shape[1]
        buf.write("# units: sample_id=index, ap=index, label_bits_hex=bitmask, feature_*=sqrt(W)\n")
        w.writerow(["sample_id", "ap", "label_bits_hex"] + [f"feature_{j}" for j in range(d)])
        n = len(self) if limit is None else min(limit, len(self))
        for i in range(n):
            bits = np.packbits(self.labels[i], bitorder="little")
            w.writerow([i, int(self.ap_index[i]), bits.tobytes().hex()] + [repr(float(v)) for v in self.features[i]])
        return buf.getvalue()


def _pick_aps(policy: str, slot_activity: np.ndarray, dominant: np.ndarray, M: int, rng: SeededRng) -> list[int]:
    if policy == "all-aps":
        return list(range(M))
    if policy == "uniform-random-ap":
        return [int(rng.integers(0, M))]
    if policy == "dominant-random-user":
        active = np.flatnonzero(slot_activity)
        pool = active if active.size else np.arange(slot_activity.size)
        return [int(dominant[pool[int(rng.integers(0, pool.size))]])]
    raise ValueError(f"unknown ap_policy {policy!r}; choose from {AP_POLICIES}")


def generate_dataset(
    deployment: Deployment,
    count: int,
    ap_policy: str = "uniform-random-ap",
    first_slot: int = 0,
    seed: int = 0,
) -> Dataset:
    """Simulate ``count`` slots starting at ``first_slot``; one sample per recorded AP."""
    if count < 1:
        raise ValueError("count must be >= 1")
    if ap_policy not in AP_POLICIES:
        raise ValueError(f"unknown ap_policy {ap_policy!r}; choose from {AP_POLICIES}")
    cfg = deployment.config
    dominant = np.argmax(deployment.beta.beta_db, axis=0)
    policy_rng = SeededRng(seed).split("ap-policy")
    per_slot = cfg.num_aps if ap_policy == "all-aps" else 1
    n = count * per_slot
    feats = np.empty((n, cfg.feature_dim), dtype=np.float32)
    labels = np.empty((n, cfg.num_users), dtype=np.uint8)
    aps = np.empty(n, dtype=np.uint32)
    blocks = np.empty(n, dtype=np.uint32)
    slot_ids = np.empty(n, dtype=np.uint32)
    row = 0
    for i, slot in deployment.slots(first_slot, count):
        chosen = _pick_aps(ap_policy, slot.activity.a, dominant, cfg.num_aps, policy_rng.split(f"slot-{i}"))
        for m in chosen:
            feats[row] = extract_features(slot.Y[m])
            labels[row] = slot.activity.a
            aps[row] = m
            blocks[row] = slot.block_id
            slot_ids[row] = i
            row += 1
    return Dataset(
        K=cfg.num_users, L=cfg.pilot_length, N=cfg.num_antennas, M=cfg.num_aps,
        epsilon=cfg.epsilon, fading_mode=cfg.fading_mode, seed=seed,
        features=feats, labels=labels, ap_index=aps, block_id=blocks, slot_id=slot_ids,
    )


@dataclass(frozen=True)
class FeatureScaler:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def identity(cls, dim: int) -> "FeatureScaler":
        return cls(mean=np.zeros(dim), std=np.ones(dim))

    def __call__(self, features: np.ndarray) -> np.ndarray:
        return apply_scaler(self, features)


def fit_scaler(features: np.ndarray) -> FeatureScaler:
    """Per-feature mean/std over the fitting set; zero-variance columns keep std = 1."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("fit_scaler needs at least two samples")
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    flat = std == 0
    if flat.any():
        warnings.warn(f"{int(flat.sum())} zero-variance feature(s); using std = 1", stacklevel=2)
        std = np.where(flat, 1.0, std)
    return FeatureScaler(mean=mean, std=std)


def apply_scaler(scaler: FeatureScaler, features: np.ndarray) -> np.ndarray:
    return (np.asarray(features, dtype=np.float64) - scaler.mean) / scaler.std


# -- binary format ---------------------------------------------------------

def _record_size(K: int, L: int, N: int) -> int:
    return _RECORD_META.size + 4 * 2 * N * L + (K + 7) // 8


def dataset_bytes(ds: Dataset) -> bytes:
    header = _HEADER.pack(
        MAGIC, VERSION, ds.K, ds.L, ds.N, ds.M, int(round(ds.epsilon * 1e6)),
        len(ds), _FADING_CODES[ds.fading_mode], ds.seed,
    )
    n = len(ds)
    meta = np.empty((n, 3), dtype="<u4")
    meta[:, 0] = ds.slot_id
    meta[:, 1] = ds.ap_index
    meta[:, 2] = ds.block_id
    feats = np.ascontiguousarray(ds.features, dtype="<f4")
    bits = np.packbits(ds.labels.astype(np.uint8), axis=1, bitorder="little")
    records = np.concatenate(
        [meta.view(np.uint8).reshape(n, -1), feats.view(np.uint8).reshape(n, -1), bits], axis=1
    )
    return header + records.tobytes()


def write_dataset(path, ds: Dataset) -> None:
    """Write atomically (temp file, then rename)."""
    tmp = f"{path}.tmp-{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(dataset_bytes(ds))
    os.replace(tmp, path)


def read_dataset(path) -> Dataset:
    with open(path, "rb") as fh:
        blob = fh.read()
    return parse_dataset(blob)


def parse_dataset(blob: bytes) -> Dataset:
    if len(blob) < _HEADER.size:
        raise DatasetFormatError(f"truncated header at offset {len(blob)} (need {_HEADER.size} bytes)")
    magic, version, K, L, N, M, eps_ppm, count, fading, seed = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise DatasetFormatError(f"bad magic {magic!r} at offset 0, expected {MAGIC!r}")
    if version != VERSION:
        raise DatasetFormatError(f"unsupported version {version} at offset 4")
    modes = {v: k for k, v in _FADING_CODES.items()}
    if fading not in modes:
        raise DatasetFormatError(f"bad fading_mode code {fading} at offset {_HEADER.size - 9}")
    rec = _record_size(K, L, N)
    body = len(blob) - _HEADER.size
    if body < rec * count:
        idx = body // rec
        raise DatasetFormatError(
            f"truncated record for sample {idx} at offset {_HEADER.size + idx * rec} "
            f"(header promises {count} samples)"
        )
    if body > rec * count:
        raise DatasetFormatError(f"{body - rec * count} trailing bytes at offset {_HEADER.size + rec * count}")
    raw = np.frombuffer(blob, dtype=np.uint8, offset=_HEADER.size).reshape(count, rec)
    meta = raw[:, : _RECORD_META.size].copy().view("<u4")
    fstart, fend = _RECORD_META.size, _RECORD_META.size + 8 * N * L
    feats = raw[:, fstart:fend].copy().view("<f4").astype(np.float32)
    labels = np.unpackbits(raw[:, fend:], axis=1, count=K, bitorder="little")
    return Dataset(
        K=K, L=L, N=N, M=M, epsilon=eps_ppm / 1e6, fading_mode=modes[fading], seed=seed,
        features=feats, labels=labels, ap_index=meta[:, 1].astype(np.uint32),
        block_id=meta[:, 2].astype(np.uint32), slot_id=meta[:, 0].astype(np.uint32),
    )
