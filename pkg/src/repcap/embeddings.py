"""Dataset-level embedding generation and the embedding file formats."""
from __future__ import annotations

import csv
import io
import json
import struct
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import kmers, neural
from .dataset import LabeledDataset

BINARY_MAGIC = b"RCEMB001"


class EmbeddingError(ValueError):
    pass


class Method(str, Enum):
    SPIKE2VEC = "spike2vec"
    SPACED_KMERS = "spaced_kmers"
    PWM2VEC = "pwm2vec"
    AUTOENCODER = "autoencoder"
    ONEHOT = "onehot"

    @classmethod
    def parse(cls, name: str | Method) -> Method:
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower().replace("-", "_")
        try:
            return cls(key)
        except ValueError:
            valid = ", ".join(m.value for m in cls)
            raise EmbeddingError(f"unknown method {name!r}; valid methods: {valid}") from None


CORE_METHODS = (Method.SPIKE2VEC, Method.SPACED_KMERS, Method.PWM2VEC, Method.AUTOENCODER)

DEFAULT_PARAMS = {
    Method.SPIKE2VEC: {"k": 3},
    Method.SPACED_KMERS: {"k": 4, "g": 9},
    Method.PWM2VEC: {"k": 9, "pseudocount": 0.1, "target_len": None},
    Method.ONEHOT: {"target_len": None},
    Method.AUTOENCODER: {
        "z": 64,
        "hidden": None,
        "epochs": 50,
        "batch_size": 32,
        "lr": 1e-3,
        "activation": "tanh",
        "target_len": None,
        "seed": 0,
    },
}


@dataclass
class EmbeddingMatrix:
    values: np.ndarray
    row_ids: list[str]
    method: Method
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.method = Method.parse(self.method)
        self.row_ids = list(self.row_ids)
        if self.values.ndim != 2:
            raise EmbeddingError("embedding values must be a 2-D matrix")
        if self.values.shape[0] != len(self.row_ids):
            raise EmbeddingError(
                f"{self.values.shape[0]} rows but {len(self.row_ids)} row ids"
            )
        if not np.all(np.isfinite(self.values)):
            raise EmbeddingError("embedding contains non-finite values")
        if self.method in (Method.SPIKE2VEC, Method.SPACED_KMERS) and self.values.size:
            if np.any(self.values < 0) or np.any(np.abs(self.values.sum(axis=1) - 1) > 1e-9):
                raise EmbeddingError("spectrum rows must be non-negative and sum to 1")

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def header(self) -> str:
        return f"# method={self.method.value} params={json.dumps(self.params, sort_keys=True)}"

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(self.header() + "\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["id"] + [f"v{j}" for j in range(self.values.shape[1])])
        for rid, row in zip(self.row_ids, self.values):
            writer.writerow([rid] + [repr(float(v)) for v in row])
        return buf.getvalue()

    def to_binary(self) -> bytes:
        n, d = self.values.shape
        return BINARY_MAGIC + struct.pack("<QQ", n, d) + np.ascontiguousarray(
            self.values, dtype="<f8"
        ).tobytes()

    def save(self, csv_path=None, binary_path=None) -> None:
        if csv_path is not None:
            with open(csv_path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(self.to_csv())
        if binary_path is not None:
            with open(binary_path, "wb") as fh:
                fh.write(self.to_binary())


def parse_embedding_csv(text: str) -> EmbeddingMatrix:
    lines = text.splitlines()
    if not lines or not lines[0].startswith("# method="):
        raise EmbeddingError("embedding CSV must start with a '# method=... params=...' line")
    head = lines[0][len("# method=") :]
    method, _, params = head.partition(" params=")
    rows = list(csv.reader(lines[1:]))
    if not rows or rows[0][0] != "id":
        raise EmbeddingError("embedding CSV is missing its id,v0,... header")
    d = len(rows[0]) - 1
    body = [r for r in rows[1:] if r]
    values = np.array([[float(v) for v in r[1:]] for r in body]).reshape(len(body), d)
    return EmbeddingMatrix(values, [r[0] for r in body], method, json.loads(params or "{}"))


def read_embedding_csv(path) -> EmbeddingMatrix:
    with open(path, encoding="utf-8") as fh:
        return parse_embedding_csv(fh.read())


def parse_embedding_binary(raw: bytes) -> np.ndarray:
    if raw[:8] != BINARY_MAGIC:
        raise EmbeddingError("not a binary embedding file")
    n, d = struct.unpack_from("<QQ", raw, 8)
    expected = 24 + 8 * n * d
    if len(raw) != expected:
        raise EmbeddingError(f"binary embedding truncated: {len(raw)} bytes, expected {expected}")
    return np.frombuffer(raw, "<f8", n * d, 24).reshape(n, d).copy()


def resolve_params(dataset: LabeledDataset, method: Method, params: dict | None) -> dict:
    method = Method.parse(method)
    merged = dict(DEFAULT_PARAMS[method])
    for key, value in (params or {}).items():
        if key not in merged:
            raise EmbeddingError(
                f"parameter {key!r} not valid for {method.value}; valid: {', '.join(merged)}"
            )
        merged[key] = value
    lengths = dataset.lengths
    if method is Method.PWM2VEC and merged["target_len"] is None:
        merged["target_len"] = int(np.median(lengths)) - int(merged["k"]) + 1
    if method in (Method.ONEHOT, Method.AUTOENCODER) and merged["target_len"] is None:
        merged["target_len"] = int(lengths.max())
    if method is Method.AUTOENCODER and merged["hidden"] is None:
        merged["hidden"] = neural.default_hidden(int(merged["z"]))
    return merged


def _check_min_length(dataset: LabeledDataset, needed: int, what: str) -> None:
    lengths = dataset.lengths
    shortest = int(np.argmin(lengths))
    if lengths[shortest] < needed:
        rec = dataset.records[shortest]
        raise EmbeddingError(
            f"record {rec.id!r} (length {lengths[shortest]}) is shorter than {what}={needed}"
        )


def _rows(dataset: LabeledDataset, fn) -> np.ndarray:
    out = []
    for rec in dataset.records:
        try:
            out.append(fn(rec.residues))
        except kmers.KmerError as exc:
            raise EmbeddingError(f"record {rec.id!r}: {exc}") from None
    return np.vstack(out)


def embed_dataset(
    dataset: LabeledDataset, method: Method | str, params: dict | None = None
) -> EmbeddingMatrix:
    method = Method.parse(method)
    p = resolve_params(dataset, method, params)
    alphabet = dataset.alphabet
    if method is Method.SPIKE2VEC:
        _check_min_length(dataset, p["k"], "k")
        values = _rows(dataset, lambda s: kmers.spectrum(s, p["k"], alphabet))
    elif method is Method.SPACED_KMERS:
        if not 1 <= p["k"] < p["g"]:
            raise EmbeddingError(f"spaced k-mers need 1 <= k < g (k={p['k']}, g={p['g']})")
        _check_min_length(dataset, p["g"], "g")
        values = _rows(dataset, lambda s: kmers.spaced_spectrum(s, p["k"], p["g"], alphabet))
    elif method is Method.PWM2VEC:
        _check_min_length(dataset, p["k"], "k")
        if p["target_len"] < 1:
            raise EmbeddingError("pwm2vec target_len must be >= 1")
        values = _rows(
            dataset,
            lambda s: kmers.pwm2vec(s, p["k"], alphabet, p["pseudocount"], p["target_len"]),
        )
    elif method is Method.ONEHOT:
        values = _rows(dataset, lambda s: kmers.one_hot(s, alphabet, p["target_len"]))
    else:
        onehot = _rows(dataset, lambda s: kmers.one_hot(s, alphabet, p["target_len"]))
        fit = neural.train_autoencoder(
            onehot,
            z=int(p["z"]),
            epochs=int(p["epochs"]),
            batch_size=int(p["batch_size"]),
            seed=int(p["seed"]),
            hidden=int(p["hidden"]),
            lr=float(p["lr"]),
            activation=p["activation"],
        )
        p["final_loss"] = fit.losses[-1]
        values = fit.codes
    return EmbeddingMatrix(values, dataset.ids, method, p)
