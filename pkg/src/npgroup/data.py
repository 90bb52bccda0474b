"""Dataset container and CSV ingestion."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

from npgroup.errors import (
    MissingColumn,
    OverlappingGroups,
    ParseError,
    UnassignedColumn,
    ValidationError,
)
from npgroup.selection import GroupMap


@dataclass
class Dataset:
    y: NDArray[np.floating]
    x: NDArray[np.floating]
    names: list[str]
    response_name: str = "y"

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float).ravel()
        self.x = np.asarray(self.x, dtype=float).reshape(len(self.y), -1)
        if self.x.shape[1] != len(self.names):
            raise ValidationError("one name per covariate column required")
        if not (np.all(np.isfinite(self.y)) and np.all(np.isfinite(self.x))):
            raise ValidationError("dataset contains non-finite values")

    @property
    def n(self) -> int:
        return len(self.y)

    def columns(self, names: Sequence[str]) -> NDArray[np.floating]:
        idx = []
        for nm in names:
            if nm not in self.names:
                raise MissingColumn(nm)
            idx.append(self.names.index(nm))
        return self.x[:, idx]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([self.response_name, *self.names])
        for yi, row in zip(self.y, self.x):
            w.writerow([repr(float(yi)), *(repr(float(v)) for v in row)])
        return buf.getvalue()


def parse_group_spec(spec: str | Sequence[str] | Path) -> list[tuple[str, list[str]]]:
    """Parse ``name:col1,col2`` entries or a two-column ``column,group`` file.

    ``spec`` may be a path, one whitespace/semicolon separated string, or a
    sequence of such strings.  Group order follows first appearance.
    """
    if isinstance(spec, Path) or (isinstance(spec, str) and ":" not in spec and Path(spec).is_file()):
        return _parse_group_file(Path(spec))
    tokens = [spec] if isinstance(spec, str) else list(spec)
    out: list[tuple[str, list[str]]] = []
    for tok in tokens:
        for entry in tok.replace(";", " ").split():
            name, sep, cols = entry.partition(":")
            if not sep or not name or not cols:
                raise ValidationError(f"bad group entry {entry!r}; expected name:col1,col2")
            out.append((name, [c for c in cols.split(",") if c]))
    return out


def _parse_group_file(path: Path) -> list[tuple[str, list[str]]]:
    groups: dict[str, list[str]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or row[0].startswith("#"):
                continue
            if len(row) != 2:
                raise ParseError(f"{path}:{lineno}: expected 'column,group'", line=lineno)
            col, grp = (s.strip() for s in row)
            if lineno == 1 and (col, grp) == ("column", "group"):
                continue
            groups.setdefault(grp, []).append(col)
    return list(groups.items())


def build_group_map(entries: list[tuple[str, list[str]]], names: Sequence[str]) -> GroupMap:
    owner: dict[str, str] = {}
    groups = []
    for gname, cols in entries:
        idx = []
        for c in cols:
            if c not in names:
                raise MissingColumn(c)
            if c in owner:
                raise OverlappingGroups(f"column {c!r} assigned to {owner[c]!r} and {gname!r}")
            owner[c] = gname
            idx.append(list(names).index(c))
        groups.append(idx)
    missing = [c for c in names if c not in owner]
    if missing:
        raise UnassignedColumn(f"columns not assigned to any group: {', '.join(missing)}")
    return GroupMap(groups, [g for g, _ in entries])


def ingest_csv(
    path: str | Path,
    response_column: str,
    group_spec: str | Sequence[str] | Path | None = None,
) -> tuple[Dataset, GroupMap | None]:
    """Read a numeric CSV with a header row.

    Every row with an empty or non-numeric cell is reported in one
    :class:`ParseError` whose ``line`` is the first offending (1-based) line.
    """
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"no such file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError(f"{path}: empty file", line=1)
    header = [h.strip() for h in rows[0]]
    if response_column not in header:
        raise MissingColumn(response_column)
    bad: list[int] = []
    values = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        try:
            if len(row) != len(header) or any(c.strip() == "" for c in row):
                raise ValueError
            values.append([float(c) for c in row])
        except ValueError:
            bad.append(lineno)
    if bad:
        shown = ", ".join(map(str, bad[:20])) + (" ..." if len(bad) > 20 else "")
        raise ParseError(f"{path}: missing or non-numeric values on line(s) {shown}", line=bad[0])
    if not values:
        raise ParseError(f"{path}: no data rows", line=2)
    arr = np.array(values, dtype=float)
    ri = header.index(response_column)
    names = [h for i, h in enumerate(header) if i != ri]
    ds = Dataset(arr[:, ri], np.delete(arr, ri, axis=1), names, response_column)
    gm = None if group_spec is None else build_group_map(parse_group_spec(group_spec), names)
    return ds, gm
