"""Sequence datasets: FASTA parsing, label sidecars and synthetic generation."""
from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, TextIO

import numpy as np

PROTEIN_SYMBOLS = "ACDEFGHIKLMNPQRSTVWXY"
DNA_SYMBOLS = "ACGT"


class DatasetError(ValueError):
    """Malformed or inconsistent dataset input."""


class FastaError(DatasetError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class AlphabetKind(str, Enum):
    PROTEIN = "protein"
    DNA = "dna"
    CUSTOM = "custom"


@dataclass(frozen=True)
class Alphabet:
    symbols: tuple[str, ...]
    kind: AlphabetKind = AlphabetKind.CUSTOM
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        symbols = tuple(self.symbols)
        if not symbols:
            raise ValueError("alphabet is empty")
        if any(len(s) != 1 for s in symbols):
            raise ValueError("alphabet symbols must be single characters")
        if len(set(symbols)) != len(symbols):
            raise ValueError("alphabet symbols must be distinct")
        kind = AlphabetKind(self.kind)
        if kind is AlphabetKind.PROTEIN and "".join(symbols) != PROTEIN_SYMBOLS:
            raise ValueError(f"protein alphabet must be exactly {PROTEIN_SYMBOLS}")
        if kind is AlphabetKind.DNA and "".join(symbols) != DNA_SYMBOLS:
            raise ValueError(f"DNA alphabet must be exactly {DNA_SYMBOLS}")
        object.__setattr__(self, "symbols", symbols)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "_index", {s: i for i, s in enumerate(symbols)})

    @classmethod
    def protein(cls) -> Alphabet:
        return cls(tuple(PROTEIN_SYMBOLS), AlphabetKind.PROTEIN)

    @classmethod
    def dna(cls) -> Alphabet:
        return cls(tuple(DNA_SYMBOLS), AlphabetKind.DNA)

    @classmethod
    def custom(cls, symbols: Iterable[str]) -> Alphabet:
        return cls(tuple(symbols), AlphabetKind.CUSTOM)

    @classmethod
    def from_name(cls, name: str) -> Alphabet:
        """``protein``, ``dna``, or an explicit symbol string such as ``AB``."""
        lowered = name.lower()
        if lowered == "protein":
            return cls.protein()
        if lowered == "dna":
            return cls.dna()
        return cls.custom(name.upper())

    @property
    def name(self) -> str:
        if self.kind is AlphabetKind.CUSTOM:
            return "".join(self.symbols)
        return self.kind.value

    def __len__(self) -> int:
        return len(self.symbols)

    def __contains__(self, ch: str) -> bool:
        return ch in self._index

    def index(self, ch: str) -> int:
        return self._index[ch]

    def encode(self, residues: str) -> np.ndarray:
        try:
            return np.fromiter((self._index[c] for c in residues), dtype=np.int64, count=len(residues))
        except KeyError as exc:
            raise DatasetError(f"character {exc.args[0]!r} not in alphabet {self.name}") from None


@dataclass(frozen=True)
class SequenceRecord:
    id: str
    residues: str
    label: str

    def __post_init__(self):
        if not self.id:
            raise DatasetError("record id is empty")
        if not self.residues:
            raise DatasetError(f"record {self.id!r} has no residues")


@dataclass(frozen=True)
class LabeledDataset:
    records: tuple[SequenceRecord, ...]
    alphabet: Alphabet
    classes: tuple[str, ...] = ()

    def __post_init__(self):
        records = tuple(self.records)
        seen = set()
        for rec in records:
            if rec.id in seen:
                raise DatasetError(f"duplicate record id {rec.id!r}")
            seen.add(rec.id)
            bad = _first_invalid(rec.residues, self.alphabet)
            if bad is not None:
                raise DatasetError(
                    f"record {rec.id!r}: character {rec.residues[bad]!r} at position {bad + 1} "
                    f"not in alphabet {self.alphabet.name}"
                )
        object.__setattr__(self, "records", records)
        object.__setattr__(self, "classes", tuple(sorted({r.label for r in records})))

    def __len__(self) -> int:
        return len(self.records)

    @property
    def ids(self) -> list[str]:
        return [r.id for r in self.records]

    @property
    def labels(self) -> list[str]:
        return [r.label for r in self.records]

    @property
    def label_indices(self) -> np.ndarray:
        lookup = {c: i for i, c in enumerate(self.classes)}
        return np.array([lookup[r.label] for r in self.records], dtype=np.int64)

    @property
    def lengths(self) -> np.ndarray:
        return np.array([len(r.residues) for r in self.records], dtype=np.int64)

    def require_classes(self, minimum: int = 2) -> None:
        if len(self.classes) < minimum:
            raise DatasetError(f"fewer than {minimum} classes ({len(self.classes)} found)")

    def reorder(self, order: Iterable[int]) -> LabeledDataset:
        return LabeledDataset(tuple(self.records[i] for i in order), self.alphabet)


def _first_invalid(residues: str, alphabet: Alphabet) -> int | None:
    for pos, ch in enumerate(residues):
        if ch not in alphabet:
            return pos
    return None


def parse_fasta(
    source: str | TextIO,
    alphabet: Alphabet | None = None,
    drop_invalid: bool = False,
) -> list[tuple[str, str]]:
    """Parse FASTA text into ``(id, residues)`` pairs.

    The id is the first whitespace-delimited token of the header. Sequence
    lines are concatenated, stripped of whitespace and uppercased. With an
    ``alphabet``, any other character is an error naming its line, unless
    ``drop_invalid`` is set, in which case the whole record is skipped.
    """
    stream = io.StringIO(source) if isinstance(source, str) else source
    entries: list[tuple[str, str]] = []
    ids: set[str] = set()
    current_id: str | None = None
    header_line = 0
    chunks: list[str] = []
    invalid = False

    def finish():
        if current_id is None:
            return
        if not chunks:
            raise FastaError(f"header {current_id!r} has no sequence", header_line)
        if not invalid:
            entries.append((current_id, "".join(chunks)))

    lineno = 0
    for lineno, raw in enumerate(stream, start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith(">"):
            finish()
            tokens = line[1:].split()
            if not tokens:
                raise FastaError("header has no id", lineno)
            current_id = tokens[0]
            if current_id in ids:
                raise FastaError(f"duplicate id {current_id!r}", lineno)
            ids.add(current_id)
            header_line = lineno
            chunks = []
            invalid = False
            continue
        if current_id is None:
            raise FastaError("sequence data before the first header", lineno)
        seq = "".join(line.split()).upper()
        if alphabet is not None and not invalid:
            bad = _first_invalid(seq, alphabet)
            if bad is not None:
                if not drop_invalid:
                    raise FastaError(
                        f"character {seq[bad]!r} not in alphabet {alphabet.name}", lineno
                    )
                invalid = True
        chunks.append(seq)
    finish()
    if not ids:
        raise FastaError("empty FASTA input")
    return entries


def read_labels(source: str | TextIO) -> dict[str, str]:
    stream = io.StringIO(source) if isinstance(source, str) else source
    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        raise DatasetError("labels file is empty") from None
    if [h.strip().lstrip("\ufeff") for h in header] != ["id", "label"]:
        raise DatasetError(f"labels header must be 'id,label', got {','.join(header)!r}")
    labels: dict[str, str] = {}
    for rownum, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2:
            raise DatasetError(f"labels line {rownum}: expected 2 fields, got {len(row)}")
        key, label = row[0].strip(), row[1].strip()
        if key in labels:
            raise DatasetError(f"labels line {rownum}: duplicate id {key!r}")
        labels[key] = label
    return labels


def build_dataset(
    entries: list[tuple[str, str]], labels: dict[str, str], alphabet: Alphabet
) -> LabeledDataset:
    fasta_ids = [i for i, _ in entries]
    missing = [i for i in fasta_ids if i not in labels]
    if missing:
        raise DatasetError(f"ids missing from labels: {', '.join(missing)}")
    known = set(fasta_ids)
    extra = [i for i in labels if i not in known]
    if extra:
        raise DatasetError(f"ids in labels missing from FASTA: {', '.join(extra)}")
    ds = LabeledDataset(
        tuple(SequenceRecord(i, s, labels[i]) for i, s in entries), alphabet
    )
    ds.require_classes(2)
    return ds


def load_dataset(
    fasta_path: str | os.PathLike,
    labels_path: str | os.PathLike,
    alphabet: Alphabet,
    drop_invalid: bool = False,
) -> LabeledDataset:
    with open(fasta_path, encoding="utf-8") as fh:
        entries = parse_fasta(fh, alphabet, drop_invalid=drop_invalid)
    with open(labels_path, encoding="utf-8", newline="") as fh:
        labels = read_labels(fh)
    if drop_invalid:
        kept = {i for i, _ in entries}
        labels = {i: lab for i, lab in labels.items() if i in kept}
    return build_dataset(entries, labels, alphabet)


def format_fasta(dataset: LabeledDataset, width: int = 60) -> str:
    out = []
    for rec in dataset.records:
        out.append(f">{rec.id}\n")
        for start in range(0, len(rec.residues), width):
            out.append(rec.residues[start : start + width] + "\n")
    return "".join(out)


def format_labels(dataset: LabeledDataset) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["id", "label"])
    for rec in dataset.records:
        writer.writerow([rec.id, rec.label])
    return buf.getvalue()


def save_dataset(dataset: LabeledDataset, fasta_path, labels_path) -> None:
    with open(fasta_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_fasta(dataset))
    with open(labels_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_labels(dataset))


def synthesize_dataset(
    num_classes: int,
    per_class: int,
    length: int,
    alphabet: Alphabet,
    mutation_rate: float,
    seed: int,
) -> LabeledDataset:
    """Clustered synthetic sequences.

    Each class gets a random ancestor; members copy it and replace each
    position independently with probability ``mutation_rate`` by a different
    symbol drawn uniformly.
    """
    if num_classes < 1 or per_class < 1 or length < 1:
        raise ValueError("num_classes, per_class and length must be >= 1")
    if not 0.0 <= mutation_rate <= 1.0:
        raise ValueError("mutation_rate must lie in [0, 1]")
    size = len(alphabet)
    if size < 2 and mutation_rate > 0:
        raise ValueError("mutation needs an alphabet of at least 2 symbols")
    rng = np.random.default_rng(seed)
    symbols = np.array(alphabet.symbols)
    width = len(str(num_classes * per_class - 1))
    records = []
    serial = 0
    for c in range(num_classes):
        ancestor = rng.integers(0, size, length)
        for _ in range(per_class):
            seq = ancestor.copy()
            hit = rng.random(length) < mutation_rate
            if size > 1:
                # shift by 1..size-1 so the replacement always differs
                seq[hit] = (seq[hit] + rng.integers(1, size, hit.sum())) % size
            records.append(
                SequenceRecord(f"seq{serial:0{width}d}", "".join(symbols[seq]), f"c{c}")
            )
            serial += 1
    return LabeledDataset(tuple(records), alphabet)
