"""Deterministic binary containers for checkpoints and encoded datasets.

Layout: an ASCII magic line ``DEPCNN1 <kind>``, one line of compact JSON
metadata (sorted keys), then repeated tensor records of

    T <name> <dtype> <ndim> <dim0> <dim1> ...\\n

followed immediately by the raw little-endian C-order bytes.  Nothing in
the file depends on write time, so identical inputs produce identical
bytes.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .corpus import ConfigError
from .features import EncodedDataset, EncodedInstance
from .layers import AdamState
from .network import ModelConfig, ModelParams

MAGIC = "DEPCNN1"
FORMAT_VERSION = 1

_DTYPE_CODES = {"f8": "<f8", "f4": "<f4", "i8": "<i8"}


class ContainerFormatError(Exception):
    """A file that is not a well-formed tensor container."""


class SchemaMismatchError(ConfigError):
    """Artifacts produced under different feature schemas were combined."""


def _dtype_code(arr: np.ndarray) -> str:
    for code, np_code in _DTYPE_CODES.items():
        if arr.dtype == np.dtype(np_code):
            return code
    raise ValueError(f"unsupported dtype {arr.dtype}")


def write_container(path, kind: str, meta: dict, tensors) -> None:
    with open(path, "wb") as fh:
        fh.write(f"{MAGIC} {kind}\n".encode("ascii"))
        fh.write(json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8"))
        fh.write(b"\n")
        for name, arr in tensors:
            if " " in name:
                raise ValueError(f"tensor name {name!r} contains a space")
            arr = np.ascontiguousarray(arr)
            dims = " ".join(str(s) for s in arr.shape)
            fh.write(f"T {name} {_dtype_code(arr)} {arr.ndim} {dims}".rstrip().encode("ascii"))
            fh.write(b"\n")
            fh.write(arr.tobytes(order="C"))


def read_container(path, expect_kind: str | None = None):
    with open(path, "rb") as fh:
        magic = fh.readline().decode("ascii", errors="replace").rstrip("\n").split(" ")
        if len(magic) != 2 or magic[0] != MAGIC:
            raise ContainerFormatError(f"{path}: not a {MAGIC} container")
        kind = magic[1]
        if expect_kind is not None and kind != expect_kind:
            raise ContainerFormatError(
                f"{path}: container holds {kind!r}, expected {expect_kind!r}"
            )
        try:
            meta = json.loads(fh.readline().decode("utf-8"))
        except json.JSONDecodeError as exc:
            raise ContainerFormatError(f"{path}: bad metadata line ({exc})") from None
        tensors: dict[str, np.ndarray] = {}
        while True:
            header = fh.readline()
            if not header:
                break
            parts = header.decode("ascii", errors="replace").rstrip("\n").split(" ")
            if parts[0] != "T" or len(parts) < 4:
                raise ContainerFormatError(f"{path}: bad tensor header {header!r}")
            name, code, ndim = parts[1], parts[2], int(parts[3])
            if code not in _DTYPE_CODES:
                raise ContainerFormatError(f"{path}: unknown dtype code {code!r}")
            shape = tuple(int(x) for x in parts[4 : 4 + ndim])
            dtype = np.dtype(_DTYPE_CODES[code])
            count = int(np.prod(shape, dtype=np.int64)) if shape else 1
            raw = fh.read(count * dtype.itemsize)
            if len(raw) != count * dtype.itemsize:
                raise ContainerFormatError(f"{path}: truncated tensor {name!r}")
            tensors[name] = np.frombuffer(raw, dtype=dtype).reshape(shape).copy()
    return kind, meta, tensors


# -- checkpoints -------------------------------------------------------------------


@dataclass
class Checkpoint:
    params: ModelParams
    config: ModelConfig
    adam: AdamState
    schema_hash: str
    seeds: dict
    meta: dict


def save_checkpoint(path, params: ModelParams, config: ModelConfig,
                    adam: AdamState, schema_hash: str, seeds: dict | None = None) -> None:
    meta = {
        "version": FORMAT_VERSION,
        "schema_hash": schema_hash,
        "model": asdict(config),
        "seeds": dict(seeds or {}),
        "adam": {
            "learning_rate": adam.learning_rate,
            "beta1": adam.beta1,
            "beta2": adam.beta2,
            "eps": adam.eps,
            "t": adam.t,
        },
    }
    tensors = list(params.tensors().items())
    for name in params.tensors():
        if name in adam.m:
            tensors.append((f"adam_m:{name}", adam.m[name]))
            tensors.append((f"adam_v:{name}", adam.v[name]))
    write_container(path, "checkpoint", meta, tensors)


def render_manifest(config: ModelConfig, schema_hash: str, seeds: dict | None = None) -> str:
    """Human-readable summary written next to every checkpoint."""
    lines = ["# model manifest", f"schema_hash = {schema_hash}", "[model]"]
    for key, value in sorted(asdict(config).items()):
        if key == "windows":
            value = ",".join(str(w) for w in value)
        lines.append(f"{key} = {value}")
    if seeds:
        lines.append("[seeds]")
        for key in sorted(seeds):
            lines.append(f"{key} = {seeds[key]}")
    return "\n".join(lines) + "\n"


def write_manifest(path, config: ModelConfig, schema_hash: str,
                   seeds: dict | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(render_manifest(config, schema_hash, seeds))


def load_checkpoint(path, expect_schema_hash: str | None = None) -> Checkpoint:
    _, meta, tensors = read_container(path, expect_kind="checkpoint")
    schema_hash = meta["schema_hash"]
    if expect_schema_hash is not None and schema_hash != expect_schema_hash:
        raise SchemaMismatchError(
            f"checkpoint was written under schema {schema_hash[:12]}..., "
            f"data uses {expect_schema_hash[:12]}..."
        )
    model_kv = dict(meta["model"])
    model_kv["windows"] = tuple(model_kv["windows"])
    config = ModelConfig(**model_kv)
    conv_w: dict[int, list[np.ndarray]] = {}
    conv_b: dict[int, np.ndarray] = {}
    for k in config.windows:
        conv_w[k] = [tensors[f"conv_w:k{k}:c{c}"] for c in range(config.channels)]
        conv_b[k] = tensors[f"conv_b:k{k}"]
    params = ModelParams(
        conv_w=conv_w,
        conv_b=conv_b,
        fc_w=tensors["fc_w"],
        fc_b=tensors["fc_b"],
        embedding=tensors.get("embedding"),
    )
    adam_meta = meta["adam"]
    adam = AdamState(
        learning_rate=adam_meta["learning_rate"],
        beta1=adam_meta["beta1"],
        beta2=adam_meta["beta2"],
        eps=adam_meta["eps"],
    )
    adam.t = adam_meta["t"]
    for name in params.tensors():
        if f"adam_m:{name}" in tensors:
            adam.m[name] = tensors[f"adam_m:{name}"]
            adam.v[name] = tensors[f"adam_v:{name}"]
    return Checkpoint(params, config, adam, schema_hash, meta.get("seeds", {}), meta)


# -- encoded datasets --------------------------------------------------------------


def save_dataset(path, dataset: EncodedDataset) -> None:
    items = []
    tensors = []
    for i, inst in enumerate(dataset.instances):
        items.append(
            {
                "id": inst.instance_id,
                "doc": inst.doc_id,
                "label": inst.label,
                "valid_len": inst.valid_len,
                "difficult": inst.difficult,
                "has_ids": inst.word_ids1 is not None,
            }
        )
        tensors.append((f"c1:{i}", inst.channel1[: inst.valid_len]))
        tensors.append((f"c2:{i}", inst.channel2[: inst.valid_len]))
        if inst.word_ids1 is not None:
            tensors.append((f"ids1:{i}", inst.word_ids1[: inst.valid_len]))
            tensors.append((f"ids2:{i}", inst.word_ids2[: inst.valid_len]))
    if dataset.embedding_matrix is not None:
        tensors.append(("embedding", dataset.embedding_matrix))
    meta = {
        "version": FORMAT_VERSION,
        "schema_hash": dataset.schema_hash,
        "max_len": dataset.max_len,
        "d": dataset.d,
        "emb_dim": dataset.emb_dim,
        "dtype": dataset.dtype,
        "vocab": list(dataset.vocab) if dataset.vocab is not None else None,
        "items": items,
    }
    write_container(path, "dataset", meta, tensors)


def load_dataset(path) -> EncodedDataset:
    _, meta, tensors = read_container(path, expect_kind="dataset")
    max_len = meta["max_len"]
    d = meta["d"]
    np_dtype = np.float64 if meta["dtype"] == "f64" else np.float32
    instances = []
    for i, item in enumerate(meta["items"]):
        valid = item["valid_len"]
        ch1 = np.zeros((max_len, d), dtype=np_dtype)
        ch2 = np.zeros((max_len, d), dtype=np_dtype)
        ch1[:valid] = tensors[f"c1:{i}"]
        ch2[:valid] = tensors[f"c2:{i}"]
        ids1 = ids2 = None
        if item["has_ids"]:
            ids1 = np.full(max_len, -1, dtype=np.int64)
            ids2 = np.full(max_len, -1, dtype=np.int64)
            ids1[:valid] = tensors[f"ids1:{i}"]
            ids2[:valid] = tensors[f"ids2:{i}"]
        instances.append(
            EncodedInstance(
                channel1=ch1,
                channel2=ch2,
                valid_len=valid,
                label=item["label"],
                instance_id=item["id"],
                doc_id=item["doc"],
                difficult=item["difficult"],
                word_ids1=ids1,
                word_ids2=ids2,
            )
        )
    vocab = tuple(meta["vocab"]) if meta.get("vocab") else None
    return EncodedDataset(
        instances=instances,
        schema_hash=meta["schema_hash"],
        max_len=max_len,
        d=d,
        emb_dim=meta["emb_dim"],
        dtype=meta["dtype"],
        vocab=vocab,
        embedding_matrix=tensors.get("embedding"),
    )
