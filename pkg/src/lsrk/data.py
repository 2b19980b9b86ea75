"""Sparse, irregular longitudinal observations and their CSV ingestion.

All times are stored on the unit interval. The affine map from the original
time scale is kept on the dataset (``time_range``) so fitted coefficient
functions can be reported in original units.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, NamedTuple, Optional, Sequence

import numpy as np

from .exceptions import (
    ConsistencyError,
    ContractError,
    InputError,
    InsufficientDataError,
    ParseError,
    SchemaError,
)

logger = logging.getLogger(__name__)

MISSING_TOKENS = frozenset({"", "na", "nan", "null", "none", "."})


def _frozen(values, ndim):
    arr = np.array(values, dtype=np.float64, ndmin=ndim)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class SubjectRecord:
    """Observations of one subject.

    Parameters
    ----------
    subject_id : str
        Opaque identifier.
    times : array of shape (M,)
        Observation times on [0, 1].
    u : array of shape (d1, M)
        Functional-predictor observations; row ``p`` holds predictor ``p``.
    v : array of shape (M,)
        Response observations.
    z : array of shape (d2,)
        Time-independent covariates.
    """

    subject_id: str
    times: np.ndarray
    u: np.ndarray
    v: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        times = _frozen(self.times, 1).ravel()
        v = _frozen(self.v, 1).ravel()
        z = _frozen(self.z, 1).ravel()
        u = np.array(self.u, dtype=np.float64)
        if u.ndim == 1:
            u = u.reshape(-1, times.shape[0]) if u.size else np.empty((0, times.shape[0]))
        u.setflags(write=False)
        object.__setattr__(self, "subject_id", str(self.subject_id))
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "u", u)

        m = times.shape[0]
        if m < 1:
            raise InputError(f"subject {self.subject_id!r} has no observations")
        if u.ndim != 2 or u.shape[1] != m:
            raise InputError(f"subject {self.subject_id!r}: predictor rows must have length {m}")
        if v.shape[0] != m:
            raise InputError(f"subject {self.subject_id!r}: response must have length {m}")
        for name, arr in (("times", times), ("u", u), ("v", v), ("z", z)):
            if not np.all(np.isfinite(arr)):
                raise InputError(f"subject {self.subject_id!r}: non-finite value in {name}")
        if times.min() < 0.0 or times.max() > 1.0:
            raise InputError(f"subject {self.subject_id!r}: times must lie in [0, 1]")

    @property
    def m(self) -> int:
        return self.times.shape[0]

    def __eq__(self, other):
        if not isinstance(other, SubjectRecord):
            return NotImplemented
        return (
            self.subject_id == other.subject_id
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.u, other.u)
            and np.array_equal(self.v, other.v)
            and np.array_equal(self.z, other.z)
        )

    __hash__ = None


class PooledObservations(NamedTuple):
    """Canonical ordering of all observations (0-based indices)."""

    subject: np.ndarray
    index: np.ndarray
    times: np.ndarray


@dataclass(frozen=True, eq=False)
class LongitudinalDataset:
    """Collection of subjects sharing ``d1`` predictors and ``d2`` covariates.

    ``time_range`` is the ``(lo, hi)`` interval on the original scale that
    was mapped onto [0, 1].
    """

    subjects: tuple
    d1: int
    d2: int
    time_range: tuple = (0.0, 1.0)
    predictor_names: tuple = ()
    covariate_names: tuple = ()
    response_name: str = "y"
    _pooled: Optional[PooledObservations] = field(default=None, init=False, repr=False)

    def __post_init__(self):
        subjects = tuple(self.subjects)
        object.__setattr__(self, "subjects", subjects)
        if not subjects:
            raise InsufficientDataError("dataset has no subjects")
        for s in subjects:
            if s.u.shape[0] != self.d1 or s.z.shape[0] != self.d2:
                raise InputError(
                    f"subject {s.subject_id!r} has {s.u.shape[0]} predictors and "
                    f"{s.z.shape[0]} covariates; expected {self.d1} and {self.d2}"
                )
        n_tot = sum(s.m for s in subjects)
        if n_tot < self.d1 + self.d2 + 1:
            raise InsufficientDataError(
                f"{n_tot} observations cannot support {self.d1 + self.d2 + 1} coefficient functions"
            )
        lo, hi = (float(x) for x in self.time_range)
        if not hi > lo:
            raise InputError(f"invalid time range {self.time_range}")
        object.__setattr__(self, "time_range", (lo, hi))
        if not self.predictor_names:
            object.__setattr__(self, "predictor_names", tuple(f"x{p + 1}" for p in range(self.d1)))
        if not self.covariate_names:
            object.__setattr__(self, "covariate_names", tuple(f"z{q + 1}" for q in range(self.d2)))

    @property
    def n(self) -> int:
        return len(self.subjects)

    @property
    def group_sizes(self) -> np.ndarray:
        return np.array([s.m for s in self.subjects], dtype=np.int64)

    @property
    def n_total(self) -> int:
        return int(self.group_sizes.sum())

    def pooled(self) -> PooledObservations:
        """Pooled observations, computed once and cached."""
        if self._pooled is None:
            sizes = self.group_sizes
            subject = np.repeat(np.arange(self.n), sizes)
            index = np.concatenate([np.arange(m) for m in sizes])
            times = np.concatenate([s.times for s in self.subjects])
            for arr in (subject, index, times):
                arr.setflags(write=False)
            object.__setattr__(self, "_pooled", PooledObservations(subject, index, times))
        return self._pooled

    def pooled_u(self) -> np.ndarray:
        """Predictor observations stacked as a (d1, N_tot) array."""
        if self.d1 == 0:
            return np.empty((0, self.n_total))
        return np.concatenate([s.u for s in self.subjects], axis=1)

    def pooled_v(self) -> np.ndarray:
        return np.concatenate([s.v for s in self.subjects])

    def covariates(self) -> np.ndarray:
        """Scalar covariates as an (n, d2) array."""
        return np.array([s.z for s in self.subjects]).reshape(self.n, self.d2)

    def to_original_time(self, t):
        lo, hi = self.time_range
        return lo + np.asarray(t, dtype=np.float64) * (hi - lo)

    def to_unit_time(self, t):
        lo, hi = self.time_range
        return (np.asarray(t, dtype=np.float64) - lo) / (hi - lo)

    def subset(self, keep: Iterable[int]) -> "LongitudinalDataset":
        """Dataset restricted to the subjects at the given positions."""
        return LongitudinalDataset(
            tuple(self.subjects[i] for i in keep),
            self.d1,
            self.d2,
            self.time_range,
            self.predictor_names,
            self.covariate_names,
            self.response_name,
        )

    def __eq__(self, other):
        if not isinstance(other, LongitudinalDataset):
            return NotImplemented
        return (
            self.d1 == other.d1
            and self.d2 == other.d2
            and self.subjects == other.subjects
        )

    __hash__ = None


def pooled_observations(dataset: LongitudinalDataset) -> PooledObservations:
    """Flat ``(subject, within-subject index, time)`` listing of all observations.

    Subjects appear in dataset order and observations in within-subject time
    order, so position ``k`` in this listing is the knot index used by every
    representer expansion fitted to the dataset.
    """
    return dataset.pooled()


def filter_subjects(
    dataset: LongitudinalDataset, predicate: Callable[[SubjectRecord], bool]
) -> LongitudinalDataset:
    keep = [i for i, s in enumerate(dataset.subjects) if predicate(s)]
    if len(keep) < 2:
        raise InsufficientDataError(f"only {len(keep)} subject(s) satisfy the filter; need at least 2")
    return dataset.subset(keep)


@dataclass(frozen=True)
class ColumnSchema:
    """Mapping from roles to CSV column names."""

    subject: str = "subject_id"
    time: str = "time"
    response: str = "y"
    predictors: tuple = ()
    covariates: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "predictors", tuple(self.predictors))
        object.__setattr__(self, "covariates", tuple(self.covariates))

    @classmethod
    def from_dict(cls, mapping: dict) -> "ColumnSchema":
        unknown = set(mapping) - {"subject", "time", "response", "predictors", "covariates"}
        if unknown:
            raise SchemaError(f"unknown schema keys: {sorted(unknown)}")
        return cls(**mapping)

    @classmethod
    def from_json(cls, path) -> "ColumnSchema":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return {
            "subject": self.subject,
            "time": self.time,
            "response": self.response,
            "predictors": list(self.predictors),
            "covariates": list(self.covariates),
        }

    @classmethod
    def infer(cls, header: Sequence[str]) -> "ColumnSchema":
        """Default schema: ``subject_id, time, y, x1.., z1..``."""

        def numbered(prefix):
            cols = [h for h in header if h.startswith(prefix) and h[len(prefix):].isdigit()]
            return tuple(sorted(cols, key=lambda h: int(h[len(prefix):])))

        return cls(predictors=numbered("x"), covariates=numbered("z"))


def _parse(cell: str, row: int, column: str) -> float:
    try:
        value = float(cell)
    except ValueError:
        raise ParseError(f"row {row}, column {column!r}: cannot parse {cell!r} as a number", row=row)
    if not math.isfinite(value):
        raise ParseError(f"row {row}, column {column!r}: non-finite value {cell!r}", row=row)
    return value


def load_longitudinal_csv(
    path,
    schema: Optional[ColumnSchema] = None,
    time_range: Optional[tuple] = None,
    row_filter: Optional[Callable[[dict], bool]] = None,
) -> LongitudinalDataset:
    """Read a long-format CSV (one row per observation) into a dataset.

    Parameters
    ----------
    path : path-like
        UTF-8 CSV with a header row.
    schema : ColumnSchema, optional
        Column roles. Inferred from ``x1.., z1..`` headers when omitted.
    time_range : (lo, hi), optional
        Original-scale interval mapped onto [0, 1]. Defaults to the observed
        minimum and maximum time.
    row_filter : callable, optional
        Receives each raw row as a ``dict`` of strings; rows for which it
        returns False are skipped before any parsing.

    Rows with a missing time, response, predictor or covariate value are
    dropped. Row numbers in errors count the header as row 1.
    """
    path = Path(path)
    if not path.is_file():
        raise InputError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        if schema is None:
            schema = ColumnSchema.infer(header)
        required = [schema.subject, schema.time, schema.response, *schema.predictors, *schema.covariates]
        missing = [c for c in required if c not in header]
        if missing:
            raise SchemaError(f"missing column(s) {missing} in {path}")

        numeric = [schema.time, schema.response, *schema.predictors, *schema.covariates]
        groups: dict[str, list] = {}
        dropped = 0
        for row_no, row in enumerate(reader, start=2):
            if row_filter is not None and not row_filter(row):
                continue
            cells = [(row.get(c) or "").strip() for c in numeric]
            if any(cell.lower() in MISSING_TOKENS for cell in cells):
                dropped += 1
                continue
            values = [_parse(cell, row_no, col) for cell, col in zip(cells, numeric)]
            groups.setdefault(row[schema.subject].strip(), []).append((row_no, values))
    if dropped:
        logger.info("dropped %d row(s) with missing values from %s", dropped, path)
    if not groups:
        raise InsufficientDataError(f"no usable rows in {path}")

    d1, d2 = len(schema.predictors), len(schema.covariates)
    all_times = np.array([vals[0] for rows in groups.values() for _, vals in rows])
    if time_range is None:
        lo, hi = float(all_times.min()), float(all_times.max())
        if hi == lo:
            hi = lo + 1.0
    else:
        lo, hi = (float(x) for x in time_range)
    if not hi > lo:
        raise InputError(f"invalid time range ({lo}, {hi})")
    if all_times.min() < lo or all_times.max() > hi:
        raise InputError(
            f"observed times [{all_times.min()}, {all_times.max()}] fall outside the range ({lo}, {hi})"
        )

    subjects = []
    for sid, rows in groups.items():
        rows.sort(key=lambda r: r[1][0])
        block = np.array([vals for _, vals in rows])
        z_rows = block[:, 2 + d1:]
        if d2 and np.any(z_rows != z_rows[0]):
            col = schema.covariates[int(np.argmax(np.any(z_rows != z_rows[0], axis=0)))]
            raise ConsistencyError(f"covariate {col!r} varies within subject {sid!r}")
        times = np.clip((block[:, 0] - lo) / (hi - lo), 0.0, 1.0)
        subjects.append(
            SubjectRecord(
                subject_id=sid,
                times=times,
                u=block[:, 2:2 + d1].T,
                v=block[:, 1],
                z=z_rows[0] if d2 else np.empty(0),
            )
        )
    return LongitudinalDataset(
        tuple(subjects),
        d1,
        d2,
        time_range=(lo, hi),
        predictor_names=schema.predictors,
        covariate_names=schema.covariates,
        response_name=schema.response,
    )


def write_longitudinal_csv(dataset: LongitudinalDataset, path, original_scale: bool = False) -> None:
    """Write ``dataset`` in the default ``subject_id,time,y,x..,z..`` layout.

    Times are written on [0, 1] unless ``original_scale`` is set. Values use
    ``repr`` formatting, so reloading with the matching ``time_range``
    reproduces the dataset exactly.
    """
    header = (
        ["subject_id", "time", "y"]
        + [f"x{p + 1}" for p in range(dataset.d1)]
        + [f"z{q + 1}" for q in range(dataset.d2)]
    )
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for s in dataset.subjects:
            times = dataset.to_original_time(s.times) if original_scale else s.times
            for j in range(s.m):
                writer.writerow(
                    [s.subject_id, repr(float(times[j])), repr(float(s.v[j]))]
                    + [repr(float(x)) for x in s.u[:, j]]
                    + [repr(float(x)) for x in s.z]
                )
