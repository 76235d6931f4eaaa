"""Reading and writing trajectory datasets.

Two interchangeable on-disk formats:

* JSONL: one object per line, ``{"id": str, "points": [[lat, lon], ...]}``.
* CSV: columns ``id,seq,lat,lon`` sorted by (id, seq).

Coordinates are serialized with ``repr`` (shortest round-trip form), so
``load(save(d))`` reproduces every coordinate bit-exactly.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .geo import Trajectory, TrajectoryDataset

__all__ = ["DatasetFormatError", "load_dataset", "save_dataset"]


class DatasetFormatError(ValueError):
    """Raised for malformed dataset files; carries the offending line number."""

    def __init__(self, path, line: int, message: str):
        self.path = str(path)
        self.line = line
        super().__init__(f"{path}: line {line}: {message}")


def _infer_format(path, format: str | None) -> str:
    if format is not None:
        fmt = format.lower()
        if fmt not in ("jsonl", "csv"):
            raise ValueError(f"unknown format {format!r}; expected 'jsonl' or 'csv'")
        return fmt
    suffix = Path(path).suffix.lower()
    if suffix in (".jsonl", ".json", ".ndjson"):
        return "jsonl"
    if suffix == ".csv":
        return "csv"
    raise ValueError(f"cannot infer format from {path!r}; pass format=...")


def load_dataset(path, format: str | None = None) -> TrajectoryDataset:
    """Load a trajectory dataset from a JSONL or CSV file.

    An empty file yields an empty dataset. If every trajectory has the same
    length it is recorded as the dataset's ``fixed_length``.
    """
    fmt = _infer_format(path, format)
    if fmt == "jsonl":
        trajs = _load_jsonl(path)
    else:
        trajs = _load_csv(path)
    lengths = {len(t) for t in trajs}
    fixed = lengths.pop() if len(lengths) == 1 else None
    return TrajectoryDataset(trajs, fixed_length=fixed)


def save_dataset(d: TrajectoryDataset, path, format: str | None = None) -> None:
    """Write a dataset to disk; see module docstring for the formats."""
    fmt = _infer_format(path, format)
    if fmt == "jsonl":
        _save_jsonl(d, path)
    else:
        _save_csv(d, path)


def _load_jsonl(path) -> list[Trajectory]:
    trajs = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetFormatError(path, lineno, f"invalid JSON ({exc.msg})") from exc
            if not isinstance(rec, dict) or "id" not in rec or "points" not in rec:
                raise DatasetFormatError(path, lineno, "object must have 'id' and 'points'")
            try:
                trajs.append(Trajectory(str(rec["id"]), rec["points"]))
            except (ValueError, TypeError) as exc:
                raise DatasetFormatError(path, lineno, str(exc)) from exc
    return trajs


def _save_jsonl(d: TrajectoryDataset, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for t in d:
            points = [[float(lat), float(lon)] for lat, lon in t.points]
            fh.write(json.dumps({"id": t.id, "points": points}) + "\n")


_CSV_HEADER = ["id", "seq", "lat", "lon"]


def _load_csv(path) -> list[Trajectory]:
    groups: dict[str, list[tuple[int, float, float]]] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            return []
        if [h.strip().lower() for h in header] != _CSV_HEADER:
            raise DatasetFormatError(path, 1, f"expected header {','.join(_CSV_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise DatasetFormatError(path, lineno, f"expected 4 columns, got {len(row)}")
            tid = row[0]
            try:
                seq, lat, lon = int(row[1]), float(row[2]), float(row[3])
            except ValueError as exc:
                raise DatasetFormatError(path, lineno, f"unparsable row ({exc})") from exc
            groups.setdefault(tid, []).append((seq, lat, lon))
    trajs = []
    for tid, rows in groups.items():
        rows.sort(key=lambda r: r[0])
        pts = np.array([(lat, lon) for _, lat, lon in rows], dtype=float)
        trajs.append(Trajectory(tid, pts))
    return trajs


def _save_csv(d: TrajectoryDataset, path) -> None:
    # The CSV schema is sorted by (id, seq), which canonicalizes trajectory
    # order; JSONL preserves dataset order exactly.
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_CSV_HEADER)
        for t in sorted(d, key=lambda t: t.id):
            for seq, (lat, lon) in enumerate(t.points):
                writer.writerow([t.id, seq, repr(float(lat)), repr(float(lon))])
