"""CSV loading helpers.

Datasets are headered CSV files whose feature columns match the model's
feature names.  Columns named ``group=value`` are treated as the one-hot
encoding of categorical ``group`` with category ``value``; everything else
is numeric.  An optional target column holds labels (classification) or
numbers (regression).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .model import FeatureSpec


class DataError(ValueError):
    """Malformed dataset file."""


@dataclass
class Dataset:
    feature_names: list[str]
    X: np.ndarray
    y: list[str] | None
    target_name: str | None


def load_csv(path: str | Path, *, target: str | None = None) -> Dataset:
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = [row for row in reader if row]
    if target is not None and target not in header:
        raise DataError(f"{path}: no column named {target!r}")
    target_idx = header.index(target) if target is not None else None
    feature_names = [h for i, h in enumerate(header) if i != target_idx]

    data = []
    labels: list[str] = []
    for lineno, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise DataError(f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}")
        values = []
        for i, cell in enumerate(row):
            if i == target_idx:
                labels.append(cell)
                continue
            try:
                values.append(float(cell))
            except ValueError:
                raise DataError(
                    f"{path}:{lineno}: column {header[i]!r} holds non-numeric {cell!r}"
                ) from None
        data.append(values)
    if not data:
        raise DataError(f"{path}: no data rows")
    return Dataset(
        feature_names=feature_names,
        X=np.asarray(data, dtype=np.float64),
        y=labels if target is not None else None,
        target_name=target,
    )


def feature_specs_from_data(
    names: Sequence[str], X: Sequence[Sequence[float]]
) -> list[FeatureSpec]:
    """Build specs from column names and observed value ranges; ``a=b``
    column names become one-hot members of group ``a``."""
    mat = np.asarray(X, dtype=np.float64)
    specs = []
    for j, name in enumerate(names):
        if "=" in name:
            group, member = name.split("=", 1)
            specs.append(
                FeatureSpec(
                    id=j,
                    name=name,
                    kind="one_hot_member",
                    group=group,
                    member_value=member,
                    domain_min=float(mat[:, j].min()),
                    domain_max=float(mat[:, j].max()),
                )
            )
        else:
            specs.append(
                FeatureSpec(
                    id=j,
                    name=name,
                    domain_min=float(mat[:, j].min()),
                    domain_max=float(mat[:, j].max()),
                )
            )
    return specs
