"""Preparation of the Mayo primary biliary cirrhosis follow-up data.

The analysis keeps female patients on D-penicillamine (``trt == 1`` in the
R ``survival::pbcseq`` coding), visits up to day 2500, prothrombin time as
the response, bilirubin and albumin as functional predictors and age as a
scalar covariate.
"""
from __future__ import annotations

from .data import ColumnSchema, LongitudinalDataset, load_longitudinal_csv

PBC_SCHEMA = ColumnSchema(
    subject="id", time="day", response="protime", predictors=("bili", "albumin"), covariates=("age",)
)
PBC_TIME_RANGE = (0.0, 2500.0)


def pbc_row_filter(row: dict, max_day: float = PBC_TIME_RANGE[1]) -> bool:
    """True for rows of female D-penicillamine patients observed by ``max_day``."""
    try:
        day = float(row["day"])
    except (KeyError, ValueError):
        return False
    return row.get("sex", "").strip() == "f" and row.get("trt", "").strip() == "1" and day <= max_day


def load_pbc(path) -> LongitudinalDataset:
    """Load a ``pbcseq`` CSV export with the analysis filters applied."""
    return load_longitudinal_csv(path, PBC_SCHEMA, PBC_TIME_RANGE, pbc_row_filter)
