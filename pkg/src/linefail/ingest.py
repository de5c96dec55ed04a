"""Streaming access to wide sparse production-line CSV files.

The expected layout mirrors the Kaggle Bosch release: up to three
row-aligned files (numeric, categorical, date), comma separated, first
column ``Id``, optional final column ``Response``; empty cells mean
"measurement absent".
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional, Sequence

from .errors import (
    ArityMismatch,
    DuplicateColumn,
    IdMismatch,
    InvalidK,
    MalformedName,
)

ID_COLUMN = "Id"
LABEL_COLUMN = "Response"

_NAME_RE = re.compile(r"^L(\d+)_S(\d+)_([FD])(\d+)$")

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


def fnv1a64(data: bytes) -> int:
    """FNV-1a 64-bit hash; bit-exact across platforms."""
    h = _FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * _FNV_PRIME) & _MASK64
    return h


class FeatureKind(enum.Enum):
    NUMERIC = "numeric"
    DATE = "date"
    CATEGORICAL = "categorical"


@dataclass(frozen=True)
class FeatureId:
    """Parsed (line, station, kind, test number) coordinate of a column."""

    line: int
    station: int
    kind: FeatureKind
    test_id: int
    raw_name: str

    def __str__(self) -> str:
        return self.raw_name


def parse_feature_name(name: str, source_kind: FeatureKind = FeatureKind.NUMERIC) -> FeatureId:
    """Parse ``L<line>_S<station>_<F|D><test>`` into a FeatureId.

    The letter decides numeric (F) vs date (D); a categorical source file
    overrides the kind, since categorical columns reuse the F grammar.
    """
    m = _NAME_RE.match(name)
    if m is None:
        raise MalformedName(f"feature name {name!r} does not match L<int>_S<int>_<F|D><int>")
    letter = m.group(3)
    kind = FeatureKind.DATE if letter == "D" else FeatureKind.NUMERIC
    if source_kind is FeatureKind.CATEGORICAL:
        kind = FeatureKind.CATEGORICAL
    return FeatureId(
        line=int(m.group(1)),
        station=int(m.group(2)),
        kind=kind,
        test_id=int(m.group(4)),
        raw_name=name,
    )


def format_feature_name(line: int, station: int, kind: FeatureKind, test_id: int) -> str:
    """Inverse of parse_feature_name (categorical columns use the F letter)."""
    letter = "D" if kind is FeatureKind.DATE else "F"
    return f"L{line}_S{station}_{letter}{test_id}"


@dataclass
class Schema:
    """Column layout of one source file, in header order."""

    columns: list[str]
    kind: FeatureKind
    features: list[FeatureId]
    feature_positions: list[int]
    has_label: bool

    @property
    def n_features(self) -> int:
        return len(self.features)


def read_schema(header_line: str, source_kind: FeatureKind) -> Schema:
    """Build a Schema from a raw header line.

    Raises MalformedName for bad column names or a missing leading Id
    column, DuplicateColumn for repeats.
    """
    columns = header_line.rstrip("\r\n").split(",")
    if not columns or columns[0] != ID_COLUMN:
        raise MalformedName(f"header must start with {ID_COLUMN!r}, got {columns[:1]!r}")
    seen: set[str] = set()
    for col in columns:
        if col in seen:
            raise DuplicateColumn(f"column {col!r} appears more than once")
        seen.add(col)
    has_label = columns[-1] == LABEL_COLUMN
    if LABEL_COLUMN in columns and not has_label:
        raise MalformedName(f"{LABEL_COLUMN!r} must be the final column")
    last_feature = len(columns) - 1 if has_label else len(columns)
    features = []
    positions = []
    for pos in range(1, last_feature):
        features.append(parse_feature_name(columns[pos], source_kind))
        positions.append(pos)
    return Schema(
        columns=columns,
        kind=source_kind,
        features=features,
        feature_positions=positions,
        has_label=has_label,
    )


@dataclass
class SparseRow:
    """One product part: the present (feature, value) pairs plus metadata."""

    id: int
    numeric: list[tuple[FeatureId, float]] = field(default_factory=list)
    date: list[tuple[FeatureId, float]] = field(default_factory=list)
    categorical: list[tuple[FeatureId, str]] = field(default_factory=list)
    label: Optional[int] = None

    def n_present(self) -> int:
        return len(self.numeric) + len(self.date) + len(self.categorical)


@dataclass
class SourceFiles:
    """Paths of the row-aligned source files; any subset may be present."""

    numeric: Optional[Path] = None
    categorical: Optional[Path] = None
    date: Optional[Path] = None

    def items(self) -> list[tuple[FeatureKind, Path]]:
        pairs = [
            (FeatureKind.NUMERIC, self.numeric),
            (FeatureKind.CATEGORICAL, self.categorical),
            (FeatureKind.DATE, self.date),
        ]
        return [(kind, Path(p)) for kind, p in pairs if p is not None]


def from_directory(directory: str | Path, prefix: str = "train") -> SourceFiles:
    """Locate ``<prefix>_numeric/categorical/date.csv`` under a directory."""
    directory = Path(directory)
    def existing(name: str) -> Optional[Path]:
        p = directory / f"{prefix}_{name}.csv"
        return p if p.exists() else None
    files = SourceFiles(
        numeric=existing("numeric"),
        categorical=existing("categorical"),
        date=existing("date"),
    )
    if not files.items():
        raise FileNotFoundError(f"no {prefix}_* source files under {directory}")
    return files


def read_schemas(files: SourceFiles) -> dict[FeatureKind, Schema]:
    """Read the header line of every present source file."""
    schemas: dict[FeatureKind, Schema] = {}
    for kind, path in files.items():
        with open(path, "r", encoding="utf-8") as fh:
            header = fh.readline()
        schemas[kind] = read_schema(header, kind)
    return schemas


def _split_checked(line: str, schema: Schema, path: Path) -> list[str]:
    cells = line.rstrip("\r\n").split(",")
    if len(cells) != len(schema.columns):
        raise ArityMismatch(
            f"{path}: expected {len(schema.columns)} cells, got {len(cells)}"
        )
    return cells


def stream_rows(
    files: SourceFiles,
    schemas: Optional[dict[FeatureKind, Schema]] = None,
) -> Iterator[SparseRow]:
    """Yield SparseRows by reading the source files in lock-step.

    The files must be row-aligned on Id (asserted per row); memory stays
    O(1) rows. Empty cells are skipped, never stored.
    """
    if schemas is None:
        schemas = read_schemas(files)
    sources = files.items()
    handles = [open(path, "r", encoding="utf-8") for _, path in sources]
    try:
        for fh in handles:
            fh.readline()  # header already captured in the schema
        while True:
            lines = [fh.readline() for fh in handles]
            if all(not line for line in lines):
                return
            if any(not line for line in lines):
                short = sources[lines.index("")][1]
                raise ArityMismatch(f"{short}: file ended before its siblings")
            row: Optional[SparseRow] = None
            for (kind, path), line in zip(sources, lines):
                schema = schemas[kind]
                cells = _split_checked(line, schema, path)
                row_id = int(cells[0])
                if row is None:
                    row = SparseRow(id=row_id)
                elif row.id != row_id:
                    raise IdMismatch(f"{path}: Id {row_id} does not match {row.id}")
                if kind is FeatureKind.NUMERIC:
                    target = row.numeric
                elif kind is FeatureKind.DATE:
                    target = row.date
                else:
                    target = row.categorical
                for pos, fid in zip(schema.feature_positions, schema.features):
                    cell = cells[pos]
                    if cell:
                        if kind is FeatureKind.CATEGORICAL:
                            target.append((fid, cell))
                        else:
                            target.append((fid, float(cell)))
                if schema.has_label and row.label is None:
                    cell = cells[-1]
                    if cell:
                        row.label = int(cell)
            assert row is not None
            yield row
    finally:
        for fh in handles:
            fh.close()


def assign_fold(row_id: int, k: int, seed: int) -> int:
    """Deterministic fold index in [0, k) from a hash of (seed, id).

    Stable under streaming: no dataset materialization or shuffling, and
    any id set is exactly partitioned.
    """
    if k < 2:
        raise InvalidK(f"fold count must be >= 2, got {k}")
    return fnv1a64(f"{seed}:{row_id}".encode()) % k


def fold_filter(k: int, seed: int, keep: Sequence[int]):
    """Predicate selecting rows whose fold is in ``keep``."""
    wanted = frozenset(keep)
    return lambda row_id: assign_fold(row_id, k, seed) in wanted
