"""Versioned binary containers: checkpoints and preprocessed datasets.

Layout of every archive:

    magic (4 bytes) | version (u32 LE) | header length (u64 LE)
    | header JSON (UTF-8) | array payloads

The header carries a JSON "meta" object plus an array manifest (name,
shape, dtype) in payload order; payloads are raw C-order bytes with
little-endian 64-bit floats (or 64-bit ints where noted). Round-trips
are bit-exact, and a version the reader does not know is rejected with
an explicit message.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass

import numpy as np

from .basis import BasisSpec, build_spec
from .cells import CiRnnParams, GruParams
from .pipeline import (MinMaxStats, PipelineOptions, PreprocessedData,
                       RegimeStats, SequenceBatch)

CHECKPOINT_MAGIC = b"CIRN"
DATASET_MAGIC = b"CIRD"
FORMAT_VERSION = 1

_DTYPES = {"<f8": np.dtype("<f8"), "<i8": np.dtype("<i8")}


class ArchiveError(ValueError):
    """Unreadable, corrupt, or wrong-version archive."""


def save_archive(path, magic: bytes, meta: dict, arrays: list[tuple[str, np.ndarray]]) -> None:
    manifest = []
    payloads = []
    for name, arr in arrays:
        dtype = "<i8" if np.issubdtype(arr.dtype, np.integer) else "<f8"
        data = np.ascontiguousarray(arr, dtype=_DTYPES[dtype])
        manifest.append({"name": name, "shape": list(arr.shape), "dtype": dtype})
        payloads.append(data.tobytes())
    header = json.dumps({"meta": meta, "arrays": manifest}).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for blob in payloads:
            fh.write(blob)


def load_archive(path, magic: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        got = fh.read(4)
        if got != magic:
            raise ArchiveError(f"{path}: bad magic {got!r}, expected {magic!r}")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != FORMAT_VERSION:
            raise ArchiveError(
                f"{path}: format version {version} is not supported; "
                f"this build reads version {FORMAT_VERSION}"
            )
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        arrays = {}
        for entry in header["arrays"]:
            dtype = _DTYPES[entry["dtype"]]
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(count * dtype.itemsize)
            arrays[entry["name"]] = np.frombuffer(buf, dtype=dtype).reshape(shape).copy()
    return header["meta"], arrays


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

PARAM_ORDER = {
    "gru": ["Ws", "Wh", "Wr", "Us", "Uh", "Ur", "V", "b_y"],
    "cirnn": ["As", "Ah", "Ar", "Us", "Uh", "Ur", "V", "b_y"],
}


@dataclass
class Checkpoint:
    """Everything needed to reproduce a trained configuration."""

    model_kind: str  # "gru" | "cirnn"
    params: GruParams | CiRnnParams
    seed: int
    config: dict
    regime_stats: RegimeStats | None = None
    context_minmax: MinMaxStats | None = None
    primary_minmax: MinMaxStats | None = None
    target_minmax: MinMaxStats | None = None
    sensors: list[int] | None = None
    settings: list[int] | None = None
    context_as_primary: bool = False


def _basis_meta(basis: BasisSpec) -> dict:
    return {"kind": basis.kind, "degree": basis.degree, "n_z": basis.n_z}


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    p = ckpt.params
    meta = {
        "model_kind": ckpt.model_kind,
        "dims": {"n_x": p.n_x, "n_h": p.n_h, "n_y": p.n_y,
                 "n_z": p.basis.n_z if isinstance(p, CiRnnParams) else None},
        "basis": _basis_meta(p.basis) if isinstance(p, CiRnnParams) else None,
        "seed": ckpt.seed,
        "config": ckpt.config,
        "sensors": ckpt.sensors,
        "settings": ckpt.settings,
        "context_as_primary": ckpt.context_as_primary,
        "has": {
            "regime_stats": ckpt.regime_stats is not None,
            "context_minmax": ckpt.context_minmax is not None,
            "primary_minmax": ckpt.primary_minmax is not None,
            "target_minmax": ckpt.target_minmax is not None,
        },
    }
    arrays = [(name, getattr(p, name)) for name in PARAM_ORDER[ckpt.model_kind]]
    if ckpt.regime_stats is not None:
        arrays += [("regime_centroids", ckpt.regime_stats.centroids),
                   ("regime_means", ckpt.regime_stats.means),
                   ("regime_ranges", ckpt.regime_stats.ranges)]
    for label, mm in (("context", ckpt.context_minmax),
                      ("primary", ckpt.primary_minmax),
                      ("target", ckpt.target_minmax)):
        if mm is not None:
            arrays += [(f"{label}_min", mm.mins), (f"{label}_max", mm.maxs)]
    save_archive(path, CHECKPOINT_MAGIC, meta, arrays)


def load_checkpoint(path) -> Checkpoint:
    meta, arrays = load_archive(path, CHECKPOINT_MAGIC)
    kind = meta["model_kind"]
    if kind not in PARAM_ORDER:
        raise ArchiveError(f"{path}: unknown model kind {kind!r}")
    fields = {name: arrays[name] for name in PARAM_ORDER[kind]}
    if kind == "cirnn":
        b = meta["basis"]
        params = CiRnnParams(basis=build_spec(b["kind"], b["degree"], b["n_z"]), **fields)
    else:
        params = GruParams(**fields)

    def minmax(label):
        if not meta["has"][f"{label}_minmax"]:
            return None
        return MinMaxStats(arrays[f"{label}_min"], arrays[f"{label}_max"])

    regime = None
    if meta["has"]["regime_stats"]:
        regime = RegimeStats(arrays["regime_centroids"], arrays["regime_means"],
                             arrays["regime_ranges"])
    return Checkpoint(
        model_kind=kind, params=params, seed=meta["seed"], config=meta["config"],
        regime_stats=regime, context_minmax=minmax("context"),
        primary_minmax=minmax("primary"), target_minmax=minmax("target"),
        sensors=meta["sensors"], settings=meta["settings"],
        context_as_primary=meta["context_as_primary"],
    )


# ---------------------------------------------------------------------------
# Preprocessed datasets
# ---------------------------------------------------------------------------


def _batch_arrays(tag: str, batch: SequenceBatch) -> list[tuple[str, np.ndarray]]:
    return [
        (f"{tag}_xs", batch.xs), (f"{tag}_zs", batch.zs),
        (f"{tag}_y", batch.y), (f"{tag}_unit_ids", batch.unit_ids),
        (f"{tag}_end_cycles", batch.end_cycles),
    ]


def _batch_from(tag: str, arrays: dict) -> SequenceBatch:
    return SequenceBatch(
        xs=arrays[f"{tag}_xs"], zs=arrays[f"{tag}_zs"], y=arrays[f"{tag}_y"],
        unit_ids=arrays[f"{tag}_unit_ids"].astype(np.int64),
        end_cycles=arrays[f"{tag}_end_cycles"].astype(np.int64),
    )


def save_dataset(path, data: PreprocessedData) -> None:
    meta = {
        "options": asdict(data.options),
        "sensors": data.sensors,
        "settings": data.settings,
        "has_test": data.test is not None,
        "has": {
            "regime_stats": data.regime_stats is not None,
            "primary_minmax": data.primary_minmax is not None,
            "target_minmax": data.target_minmax is not None,
        },
    }
    arrays = _batch_arrays("train", data.train) + _batch_arrays("val", data.val)
    if data.test is not None:
        arrays += _batch_arrays("test", data.test)
    if data.regime_stats is not None:
        arrays += [("regime_centroids", data.regime_stats.centroids),
                   ("regime_means", data.regime_stats.means),
                   ("regime_ranges", data.regime_stats.ranges)]
    arrays += [("context_min", data.context_minmax.mins),
               ("context_max", data.context_minmax.maxs)]
    for label, mm in (("primary", data.primary_minmax), ("target", data.target_minmax)):
        if mm is not None:
            arrays += [(f"{label}_min", mm.mins), (f"{label}_max", mm.maxs)]
    save_archive(path, DATASET_MAGIC, meta, arrays)


def load_dataset(path) -> PreprocessedData:
    meta, arrays = load_archive(path, DATASET_MAGIC)
    regime = None
    if meta["has"]["regime_stats"]:
        regime = RegimeStats(arrays["regime_centroids"], arrays["regime_means"],
                             arrays["regime_ranges"])

    def minmax(label):
        if f"{label}_min" not in arrays:
            return None
        return MinMaxStats(arrays[f"{label}_min"], arrays[f"{label}_max"])

    return PreprocessedData(
        train=_batch_from("train", arrays),
        val=_batch_from("val", arrays),
        test=_batch_from("test", arrays) if meta["has_test"] else None,
        regime_stats=regime,
        context_minmax=MinMaxStats(arrays["context_min"], arrays["context_max"]),
        primary_minmax=minmax("primary"),
        target_minmax=minmax("target"),
        options=PipelineOptions(**meta["options"]),
        sensors=meta["sensors"],
        settings=meta["settings"],
    )
