"""Score matrices: CSV loading, validation, column selection and splits."""

from __future__ import annotations

import csv
import io
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ._rng import SplitMix64

ID_ORIGIN = "id"
_NAME_RE = re.compile(r"^[A-Za-z0-9_+\-]+$")


class ScoreFileError(ValueError):
    """Raised when a score CSV cannot be parsed or violates an invariant."""


@dataclass(frozen=True, eq=False)
class ScoreMatrix:
    """n samples x d named detector scores, with per-sample origin tags.

    ``origin`` is ``"id"`` for in-distribution rows or the name of the OOD set
    the row comes from.
    """

    detector_names: tuple[str, ...]
    values: np.ndarray
    sample_ids: tuple[str, ...]
    origin: tuple[str, ...]

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64, copy=True)
        if values.ndim != 2:
            raise ValueError("values must be a 2-D array")
        names = tuple(str(n) for n in self.detector_names)
        ids = tuple(str(s) for s in self.sample_ids)
        origin = tuple(str(o) for o in self.origin)
        n, d = values.shape
        if n < 1:
            raise ValueError("a score matrix needs at least one row")
        if len(names) != d:
            raise ValueError(f"{len(names)} detector names for {d} columns")
        if len(set(names)) != d:
            dup = sorted({x for x in names if names.count(x) > 1})
            raise ValueError(f"duplicate detector names: {dup}")
        if len(ids) != n or len(origin) != n:
            raise ValueError("sample_ids and origin must have one entry per row")
        if len(set(ids)) != n:
            raise ValueError("sample_ids must be unique")
        if not np.all(np.isfinite(values)):
            r, c = np.argwhere(~np.isfinite(values))[0]
            raise ValueError(f"non-finite value at row {r}, column {names[c]!r}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "detector_names", names)
        object.__setattr__(self, "sample_ids", ids)
        object.__setattr__(self, "origin", origin)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    @property
    def is_id(self) -> np.ndarray:
        return np.array([o == ID_ORIGIN for o in self.origin], dtype=bool)

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self._index(name)]

    def _index(self, name: str) -> int:
        try:
            return self.detector_names.index(name)
        except ValueError:
            raise KeyError(f"unknown detector {name!r}") from None

    def select(self, names: Sequence[str]) -> "ScoreMatrix":
        return select_columns(self, names)

    def take(self, rows: Iterable[int]) -> "ScoreMatrix":
        rows = np.asarray(list(rows), dtype=np.int64)
        return ScoreMatrix(
            self.detector_names,
            self.values[rows],
            tuple(self.sample_ids[i] for i in rows),
            tuple(self.origin[i] for i in rows),
        )

    def __eq__(self, other):
        if not isinstance(other, ScoreMatrix):
            return NotImplemented
        return (
            self.detector_names == other.detector_names
            and self.sample_ids == other.sample_ids
            and self.origin == other.origin
            and np.array_equal(self.values, other.values)
        )

    def __repr__(self):
        return f"ScoreMatrix(n={self.n}, d={self.d}, detectors={list(self.detector_names)})"


def load_scores(path) -> ScoreMatrix:
    """Parse a score CSV (``sample_id,origin,<name1>,...``) into a ScoreMatrix."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        text = fh.read()
    return parse_scores(text, source=str(path))


def parse_scores(text: str, source: str = "<string>") -> ScoreMatrix:
    rows = list(csv.reader(io.StringIO(text)))
    rows = [r for r in rows if r]
    if not rows:
        raise ScoreFileError(f"{source}: empty file")
    header = [h.strip() for h in rows[0]]
    if header[:2] != ["sample_id", "origin"]:
        raise ScoreFileError(f"{source}: header must start with 'sample_id,origin', got {header[:2]}")
    names = header[2:]
    if not names:
        raise ScoreFileError(f"{source}: no score columns")
    seen = set()
    for col, name in enumerate(names, start=3):
        if not _NAME_RE.match(name):
            raise ScoreFileError(f"{source}: invalid detector name {name!r} in column {col}")
        if name in seen:
            raise ScoreFileError(f"{source}: duplicate detector name {name!r} in column {col}")
        seen.add(name)
    body = rows[1:]
    if not body:
        raise ScoreFileError(f"{source}: no data rows")

    values = np.empty((len(body), len(names)))
    ids, origin = [], []
    seen_ids: dict[str, int] = {}
    for r, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise ScoreFileError(f"{source}: line {r} has {len(row)} fields, expected {len(header)}")
        sid, org = row[0].strip(), row[1].strip()
        if not sid:
            raise ScoreFileError(f"{source}: line {r}: empty sample_id")
        if sid in seen_ids:
            raise ScoreFileError(
                f"{source}: line {r}: duplicate sample_id {sid!r} (first on line {seen_ids[sid]})"
            )
        if not org:
            raise ScoreFileError(f"{source}: line {r}: empty origin")
        seen_ids[sid] = r
        ids.append(sid)
        origin.append(org)
        for c, cell in enumerate(row[2:]):
            try:
                v = float(cell)
            except ValueError:
                raise ScoreFileError(
                    f"{source}: line {r}, column {names[c]!r}: cannot parse {cell!r}"
                ) from None
            if not math.isfinite(v):
                raise ScoreFileError(f"{source}: line {r}, column {names[c]!r}: non-finite value {cell!r}")
            values[r - 2, c] = v
    return ScoreMatrix(tuple(names), values, tuple(ids), tuple(origin))


def format_scores(matrix: ScoreMatrix) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(("sample_id", "origin") + matrix.detector_names)
    for i in range(matrix.n):
        w.writerow([matrix.sample_ids[i], matrix.origin[i], *(repr(float(v)) for v in matrix.values[i])])
    return out.getvalue()


def write_scores(matrix: ScoreMatrix, path) -> None:
    from .utils import atomic_write_text

    atomic_write_text(path, format_scores(matrix))


def select_columns(matrix: ScoreMatrix, names: Sequence[str]) -> ScoreMatrix:
    """Sub-matrix with the given detector columns, in the given order."""
    names = list(names)
    if not names:
        raise ValueError("select at least one column")
    idx = [matrix._index(nm) for nm in names]
    return ScoreMatrix(tuple(names), matrix.values[:, idx], matrix.sample_ids, matrix.origin)


# --------------------------------------------------------------------------- splits


@dataclass(frozen=True)
class SplitSpec:
    fractions: tuple[float, ...]
    seed: int = 42

    def __post_init__(self):
        fr = tuple(float(f) for f in self.fractions)
        if not fr:
            raise ValueError("at least one fraction is required")
        if any(not (f > 0) for f in fr):
            raise ValueError(f"fractions must be positive: {fr}")
        if abs(math.fsum(fr) - 1.0) > 1e-12:
            raise ValueError(f"fractions must sum to 1, got {math.fsum(fr)!r}")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        object.__setattr__(self, "fractions", fr)


DEFAULT_ID_SPLIT = SplitSpec((0.25, 0.25, 0.50), 42)
DEFAULT_OOD_SPLIT = SplitSpec((0.5, 0.5), 42)
ID_PARTS = ("cal", "val", "test")
OOD_PARTS = ("val", "test")


@dataclass(frozen=True)
class SplitBundle:
    """Disjoint named row-index sets covering a matrix; each set sorted."""

    parts: dict = field(default_factory=dict)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.parts[name]

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(self.parts)

    def sizes(self) -> tuple[int, ...]:
        return tuple(len(v) for v in self.parts.values())

    def apply(self, matrix: ScoreMatrix) -> dict[str, ScoreMatrix]:
        return {k: matrix.take(v) for k, v in self.parts.items() if len(v)}


def largest_remainder(n: int, fractions: Sequence[float]) -> list[int]:
    """Integer sizes summing to n, each within 1 of fraction * n.

    Leftover units go to the largest fractional parts; equal remainders are
    resolved by position.
    """
    raw = [f * n for f in fractions]
    sizes = [int(math.floor(r)) for r in raw]
    left = n - sum(sizes)
    order = sorted(range(len(raw)), key=lambda i: (-(raw[i] - sizes[i]), i))
    for i in order[:left]:
        sizes[i] += 1
    return sizes


def _partition(rows: np.ndarray, spec: SplitSpec, rng: SplitMix64) -> list[np.ndarray]:
    perm = rows[rng.permutation(len(rows))]
    sizes = largest_remainder(len(rows), spec.fractions)
    bounds = np.cumsum([0] + sizes)
    return [perm[bounds[i] : bounds[i + 1]] for i in range(len(sizes))]


def split_id(matrix: ScoreMatrix, spec: SplitSpec = DEFAULT_ID_SPLIT) -> SplitBundle:
    """Seeded shuffle of ID rows into (cal, val, test)."""
    if len(spec.fractions) != 3:
        raise ValueError(f"ID split needs 3 fractions, got {len(spec.fractions)}")
    bad = [i for i, o in enumerate(matrix.origin) if o != ID_ORIGIN]
    if bad:
        raise ValueError(f"split_id: {len(bad)} non-ID rows (first: row {bad[0]}, origin {matrix.origin[bad[0]]!r})")
    parts = _partition(np.arange(matrix.n), spec, SplitMix64(spec.seed))
    return SplitBundle({name: np.sort(p) for name, p in zip(ID_PARTS, parts)})


def split_ood(matrix: ScoreMatrix, spec: SplitSpec = DEFAULT_OOD_SPLIT) -> SplitBundle:
    """Seeded (val, test) split of OOD rows, stratified per origin tag."""
    if len(spec.fractions) != 2:
        raise ValueError(f"OOD split needs 2 fractions, got {len(spec.fractions)}")
    if matrix is None or matrix.n == 0:
        raise ValueError("split_ood: empty input")
    origin = np.array(matrix.origin)
    if np.any(origin == ID_ORIGIN):
        raise ValueError("split_ood: input contains ID rows")
    rng = SplitMix64(spec.seed)
    collected: list[list[np.ndarray]] = [[], []]
    for tag in sorted(set(matrix.origin)):
        rows = np.flatnonzero(origin == tag)
        for k, p in enumerate(_partition(rows, spec, rng)):
            collected[k].append(p)
    return SplitBundle(
        {name: np.sort(np.concatenate(c)).astype(np.int64) for name, c in zip(OOD_PARTS, collected)}
    )
