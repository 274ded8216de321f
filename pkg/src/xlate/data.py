"""Loading, validation and standardization of the two observation matrices.

Each dataset is a samples-by-variables matrix plus per-sample metadata
(individual, ordinal visit number, binary disease label).  Samples and
variables are never assumed to be paired across the two datasets.
"""
from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

META_COLUMNS = ("sample_id", "individual_id", "time_index", "disease")
_MISSING = {"", "na", "nan", "null", "none"}


class DataError(ValueError):
    """An input file or array violates the dataset contract."""


class SampleMeta(NamedTuple):
    sample_id: str
    individual_id: str
    time_index: int
    disease: int


@dataclass(frozen=True)
class Standardization:
    """Per-column affine transform recorded at load time."""

    mean: np.ndarray
    scale: np.ndarray
    log1p: bool = False

    def apply(self, values):
        values = np.asarray(values, dtype=float)
        if self.log1p:
            values = np.log1p(values)
        return (values - self.mean) / self.scale

    def invert(self, z):
        values = np.asarray(z, dtype=float) * self.scale + self.mean
        if self.log1p:
            values = np.expm1(values)
        return values


def standardize(values, log1p: bool = False):
    """Z-score every column (ddof=1) and return ``(z, transform)``.

    Raises ``DataError`` on a constant column or fewer than two rows.
    """
    values = np.asarray(values, dtype=float)
    if values.ndim != 2:
        raise DataError("values must be a 2-d matrix")
    if values.shape[0] < 2:
        raise DataError("at least two samples are needed to standardize")
    work = np.log1p(values) if log1p else values
    if not np.all(np.isfinite(work)):
        raise DataError("non-finite value in matrix")
    const = np.ptp(work, axis=0) == 0
    if np.any(const):
        raise DataError(f"constant column at index {int(np.flatnonzero(const)[0])}")
    mean = work.mean(axis=0)
    scale = work.std(axis=0, ddof=1)
    transform = Standardization(mean=mean, scale=scale, log1p=log1p)
    return (work - mean) / scale, transform


@dataclass(frozen=True)
class Dataset:
    values: np.ndarray
    sample_ids: tuple
    individual_ids: tuple
    time_index: np.ndarray
    disease: np.ndarray
    variable_names: tuple
    standardization: Standardization | None = None

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_variables(self) -> int:
        return self.values.shape[1]

    @property
    def meta(self) -> list[SampleMeta]:
        return [
            SampleMeta(s, i, int(t), int(b))
            for s, i, t, b in zip(self.sample_ids, self.individual_ids, self.time_index, self.disease)
        ]

    def individuals(self) -> list[np.ndarray]:
        """Row indices of each individual, ordered by time, individuals in first-seen order."""
        order: dict[str, list[int]] = {}
        for row, ind in enumerate(self.individual_ids):
            order.setdefault(ind, []).append(row)
        out = []
        for rows in order.values():
            rows = np.asarray(rows, dtype=np.intp)
            out.append(rows[np.argsort(self.time_index[rows], kind="stable")])
        return out

    def raw_values(self) -> np.ndarray:
        if self.standardization is None:
            return np.array(self.values)
        return self.standardization.invert(self.values)

    def canonical_bytes(self) -> bytes:
        header = {
            "sample_ids": list(self.sample_ids),
            "individual_ids": list(self.individual_ids),
            "time_index": self.time_index.tolist(),
            "disease": self.disease.tolist(),
            "variable_names": list(self.variable_names),
            "shape": list(self.values.shape),
        }
        parts = [json.dumps(header, sort_keys=True).encode(), np.ascontiguousarray(self.values, "<f8").tobytes()]
        if self.standardization is not None:
            st = self.standardization
            parts += [np.ascontiguousarray(st.mean, "<f8").tobytes(), np.ascontiguousarray(st.scale, "<f8").tobytes(),
                      b"log1p" if st.log1p else b"identity"]
        return b"\x00".join(parts)

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_bytes()).hexdigest()

    @classmethod
    def from_arrays(cls, values, individual_ids, time_index, disease, *, sample_ids=None,
                    variable_names=None, standardize_values=True, log1p=False) -> "Dataset":
        values = np.asarray(values, dtype=float)
        if values.ndim != 2:
            raise DataError("values must be a 2-d matrix")
        n, p = values.shape
        individual_ids = tuple(str(i) for i in individual_ids)
        time_index = np.asarray(time_index, dtype=int)
        disease = np.asarray(disease, dtype=int)
        if sample_ids is None:
            sample_ids = tuple(f"s{i + 1}" for i in range(n))
        if variable_names is None:
            variable_names = tuple(f"v{i + 1}" for i in range(p))
        sample_ids, variable_names = tuple(sample_ids), tuple(variable_names)
        if not (len(individual_ids) == len(time_index) == len(disease) == len(sample_ids) == n):
            raise DataError(f"row-count mismatch: {n} value rows vs {len(individual_ids)} meta rows")
        if len(variable_names) != p:
            raise DataError("variable_names length does not match column count")
        if np.isnan(values).any():
            raise DataError("missing value in values matrix")
        validate_design(individual_ids, time_index, disease)
        transform = None
        if standardize_values:
            values, transform = standardize(values, log1p=log1p)
        values.flags.writeable = False
        time_index.flags.writeable = False
        disease.flags.writeable = False
        return cls(values, sample_ids, individual_ids, time_index, disease, variable_names, transform)


def validate_design(individual_ids, time_index, disease) -> None:
    """Check per-individual visit numbering and disease labels."""
    seen: dict[str, list[int]] = {}
    label: dict[str, int] = {}
    for ind, t, b in zip(individual_ids, time_index, disease):
        if b not in (0, 1):
            raise DataError(f"disease not in {{0,1}} for individual {ind!r}: {b}")
        if label.setdefault(ind, b) != b:
            raise DataError(f"disease label changes within individual {ind!r}")
        seen.setdefault(ind, []).append(int(t))
    for ind, times in seen.items():
        if sorted(times) != list(range(1, len(times) + 1)):
            raise DataError(f"non-consecutive time index for individual {ind!r}: {sorted(times)}")


@dataclass(frozen=True)
class StudyPair:
    dataset_x: Dataset
    dataset_y: Dataset


def _read_rows(path: Path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file")
    return rows[0], rows[1:]


def load_dataset(values_path, meta_path, log1p: bool = False) -> Dataset:
    """Read a values CSV and its meta CSV, validate, and standardize."""
    values_path, meta_path = Path(values_path), Path(meta_path)
    header, rows = _read_rows(values_path)
    p = len(header)
    values = np.empty((len(rows), p))
    for r, row in enumerate(rows):
        line = r + 2
        if len(row) != p:
            raise DataError(f"{values_path}:{line}: expected {p} cells, got {len(row)}")
        for c, cell in enumerate(row):
            if cell.strip().lower() in _MISSING:
                raise DataError(f"{values_path}:{line}: missing value in column {header[c]!r}")
            try:
                values[r, c] = float(cell)
            except ValueError:
                raise DataError(f"{values_path}:{line}: non-numeric cell {cell!r} in column {header[c]!r}") from None

    mheader, mrows = _read_rows(meta_path)
    mheader = [h.strip() for h in mheader]
    missing = [c for c in META_COLUMNS if c not in mheader]
    if missing:
        raise DataError(f"{meta_path}: missing meta columns {missing}")
    idx = {c: mheader.index(c) for c in META_COLUMNS}
    if len(mrows) != len(rows):
        raise DataError(f"row-count mismatch: {values_path} has {len(rows)} rows, {meta_path} has {len(mrows)}")
    sample_ids, inds, times, dis = [], [], [], []
    for r, row in enumerate(mrows):
        line = r + 2
        try:
            times.append(int(row[idx["time_index"]]))
            dis.append(int(row[idx["disease"]]))
        except (ValueError, IndexError):
            raise DataError(f"{meta_path}:{line}: malformed time_index or disease") from None
        sample_ids.append(row[idx["sample_id"]])
        inds.append(row[idx["individual_id"]])
    try:
        return Dataset.from_arrays(values, inds, times, dis, sample_ids=sample_ids,
                                   variable_names=header, log1p=log1p)
    except DataError as err:
        raise DataError(f"{values_path}: {err}") from None


def write_dataset(dataset: Dataset, values_path, meta_path, raw: bool = True) -> None:
    """Write ``dataset`` as a values CSV and meta CSV (raw scale by default)."""
    values = dataset.raw_values() if raw else dataset.values
    with open(values_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(dataset.variable_names)
        for row in values:
            w.writerow([repr(float(v)) for v in row])
    with open(meta_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(META_COLUMNS)
        for m in dataset.meta:
            w.writerow([m.sample_id, m.individual_id, m.time_index, m.disease])
