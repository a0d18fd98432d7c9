"""CSV data loading for the batch front end.

Spatial datasets come from one CSV with named coordinate, outcome and
covariate columns.  Dynamic datasets use a station-coordinate CSV, an
n x N_t outcome CSV whose missing cells hold the literal token ``NA``, and a
design CSV with per-step covariate columns named ``<name>.<t>``.  Only the
dynamic outcome file may contain NA.
"""

import csv

import numpy as np

from .dynamic import DynamicDataset
from .errors import MissingNotAllowed, ParseError
from .model import SpatialDataset

__all__ = [
    "read_table",
    "load_spatial_dataset",
    "load_dynamic_dataset",
    "load_prediction_frame",
]

NA_TOKEN = "NA"


def read_table(path):
    """(headers, rows-of-strings) from a headered CSV file."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            headers = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        headers = [h.strip() for h in headers]
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != len(headers):
                raise ParseError(
                    f"{path}: row {lineno} has {len(row)} fields, expected "
                    f"{len(headers)}",
                    row=lineno,
                )
            rows.append([v.strip() for v in row])
    return headers, rows


def _column_indices(headers, wanted, path):
    idx = []
    for name in wanted:
        try:
            idx.append(headers.index(name))
        except ValueError:
            raise ParseError(f"{path}: missing column {name!r}") from None
    return idx


def _parse_float(value, path, lineno, colname, allow_na=False):
    if value == NA_TOKEN:
        if allow_na:
            return np.nan
        raise MissingNotAllowed(
            f"{path}: NA at row {lineno}, column {colname!r}; missing values "
            "are only supported by the dynamic model"
        )
    try:
        return float(value)
    except ValueError:
        raise ParseError(
            f"{path}: row {lineno}, column {colname!r}: not a number: "
            f"{value!r}",
            row=lineno,
            column=colname,
        ) from None


def _numeric_block(path, headers, rows, names, allow_na=False):
    idx = _column_indices(headers, names, path)
    out = np.empty((len(rows), len(names)))
    for i, row in enumerate(rows):
        for j, (col, name) in enumerate(zip(idx, names)):
            out[i, j] = _parse_float(row[col], path, i + 2, name,
                                     allow_na=allow_na)
    return out


def _design(block, intercept):
    if intercept:
        return np.column_stack([np.ones(block.shape[0]), block])
    return block


def load_spatial_dataset(path, coord_names, outcome_name, covariate_names,
                         intercept=True):
    """SpatialDataset from one CSV; NA anywhere is rejected."""
    headers, rows = read_table(path)
    coords = _numeric_block(path, headers, rows, list(coord_names))
    y = _numeric_block(path, headers, rows, [outcome_name])[:, 0]
    covs = (
        _numeric_block(path, headers, rows, list(covariate_names))
        if covariate_names
        else np.empty((len(rows), 0))
    )
    return SpatialDataset(coords=coords, y=y, x=_design(covs, intercept))


def load_prediction_frame(path, coord_names, covariate_names, intercept=True):
    """(coords, design) for new prediction locations."""
    headers, rows = read_table(path)
    coords = _numeric_block(path, headers, rows, list(coord_names))
    covs = (
        _numeric_block(path, headers, rows, list(covariate_names))
        if covariate_names
        else np.empty((len(rows), 0))
    )
    return coords, _design(covs, intercept)


def load_dynamic_dataset(coords_path, y_path, x_path, coord_names,
                         covariate_names, intercept=True):
    """DynamicDataset from a coordinate CSV, an outcome matrix CSV and a
    per-step design CSV with ``<covariate>.<t>`` columns."""
    headers, rows = read_table(coords_path)
    coords = _numeric_block(coords_path, headers, rows, list(coord_names))
    n = coords.shape[0]

    y_headers, y_rows = read_table(y_path)
    if len(y_rows) != n:
        raise ParseError(
            f"{y_path}: {len(y_rows)} stations, expected {n}"
        )
    nt = len(y_headers)
    y = np.empty((n, nt))
    for i, row in enumerate(y_rows):
        for t in range(nt):
            y[i, t] = _parse_float(row[t], y_path, i + 2, y_headers[t],
                                   allow_na=True)

    x_headers, x_rows = read_table(x_path)
    if len(x_rows) != n:
        raise ParseError(f"{x_path}: {len(x_rows)} stations, expected {n}")
    p0 = len(covariate_names)
    x = np.empty((nt, n, p0 + (1 if intercept else 0)))
    for t in range(nt):
        names = [f"{c}.{t + 1}" for c in covariate_names]
        block = _numeric_block(x_path, x_headers, x_rows, names) if p0 else \
            np.empty((n, 0))
        x[t] = _design(block, intercept)
    return DynamicDataset(coords=coords, y=y, x=x)
