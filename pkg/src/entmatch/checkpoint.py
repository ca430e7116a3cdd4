"""Binary model checkpoints.

Layout: the magic bytes ``DEEPER1``, an 8-byte little-endian manifest
length, a JSON manifest (schema, dataset names, model config, tokenizer
config, embedding fingerprint, array directory), then the raw parameter
arrays as little-endian float32 in manifest order.  Training runs in
64-bit; only storage is 32-bit.
"""

from __future__ import annotations

import dataclasses
import json
import warnings

import numpy as np

from .model import DeepERModel, ModelConfig
from .text import EmbeddingStore, TokenizerConfig

MAGIC = b"DEEPER1"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    """The checkpoint file is malformed or does not match this build."""


class EmbeddingMismatchError(CheckpointError):
    """The checkpoint was trained against a different embedding store."""


def save_model(model: DeepERModel, path) -> None:
    params = model.parameters()
    arrays = [(p.name, p.data.astype("<f4")) for p in params]
    manifest = {
        "format_version": FORMAT_VERSION,
        "schema": model.schema,
        "dataset_names": model.dataset_names,
        "config": dataclasses.asdict(model.config),
        "tokenizer": dataclasses.asdict(model.tokenizer),
        "embedding_fingerprint": model.store.fingerprint,
        "embed_vocab": (sorted(model.embed_vocab, key=model.embed_vocab.get)
                        if model.embed_matrix is not None else None),
        "arrays": [{"name": n, "shape": list(a.shape)} for n, a in arrays],
    }
    blob = json.dumps(manifest, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(len(blob).to_bytes(8, "little"))
        fh.write(blob)
        for _, a in arrays:
            fh.write(np.ascontiguousarray(a).tobytes())


def read_manifest(path) -> dict:
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise CheckpointError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
        size = int.from_bytes(fh.read(8), "little")
        return json.loads(fh.read(size).decode("utf-8"))


def load_model(path, store: EmbeddingStore, *, force: bool = False) -> DeepERModel:
    """Rebuild a model from a checkpoint.

    A fingerprint mismatch against ``store`` warns and refuses to load
    unless ``force`` is set, since frozen-embedding weights are only
    meaningful together with the vectors they were trained against.
    """
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise CheckpointError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
        size = int.from_bytes(fh.read(8), "little")
        try:
            manifest = json.loads(fh.read(size).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"{path}: unreadable manifest: {exc}") from None
        if manifest.get("format_version") != FORMAT_VERSION:
            raise CheckpointError(f"{path}: unsupported format version "
                                  f"{manifest.get('format_version')}")
        fingerprint = manifest.get("embedding_fingerprint")
        if fingerprint != store.fingerprint:
            warnings.warn(f"checkpoint embedding fingerprint {fingerprint} does "
                          f"not match the offered store {store.fingerprint}")
            if not force:
                raise EmbeddingMismatchError(
                    f"{path}: embedding fingerprint mismatch (pass force=True to "
                    "load anyway)")
        arrays: dict[str, np.ndarray] = {}
        for entry in manifest["arrays"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(count * 4)
            if len(raw) != count * 4:
                raise CheckpointError(f"{path}: truncated array {entry['name']!r}")
            arrays[entry["name"]] = np.frombuffer(raw, dtype="<f4").reshape(shape) \
                .astype(np.float64)

    config = ModelConfig(**manifest["config"])
    tokenizer = TokenizerConfig(**manifest["tokenizer"])
    model = DeepERModel(manifest["schema"], store, config,
                        dataset_names=manifest.get("dataset_names"),
                        tokenizer=tokenizer)
    vocab = manifest.get("embed_vocab")
    if vocab is not None:
        from .autodiff import Tensor
        if "embed.matrix" not in arrays:
            raise CheckpointError(f"{path}: fine-tuned checkpoint lacks the "
                                  "embedding table")
        model.embed_vocab = {t: i for i, t in enumerate(vocab)}
        model.embed_matrix = Tensor(arrays.pop("embed.matrix"),
                                    requires_grad=True, name="embed.matrix")
    expected = {p.name for p in model.parameters()}
    missing = expected - set(arrays) - ({"embed.matrix"} if vocab else set())
    if missing:
        raise CheckpointError(f"{path}: missing arrays {sorted(missing)}")
    for name, p in model.named_parameters().items():
        if name == "embed.matrix":
            continue
        src = arrays[name]
        if src.shape != p.data.shape:
            raise CheckpointError(f"{path}: array {name!r} has shape {src.shape}, "
                                  f"expected {p.data.shape}")
        p.data[...] = src
    return model


def dataset_names_of(path) -> list[str] | None:
    return read_manifest(path).get("dataset_names")
