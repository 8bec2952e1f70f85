"""File formats: numeric CSV, dataset manifests, and key=value configs.

Floats are written with 17 significant digits so double precision
round-trips exactly through text.  CSV files have no header, use '.' as
the decimal separator, and one row per line.  A dataset manifest is a
key=value text file with n, M, T and per-task design/response file
paths, resolved relative to the manifest's directory.
"""

from __future__ import annotations

import os

import numpy as np

from .model import GroupCoefficients, MultiTaskDataset


class ParseError(ValueError):
    """Malformed input file; the message cites file and position."""


def format_float(x):
    return f"{float(x):.17g}"


def write_matrix_csv(path, matrix):
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim == 1:
        matrix = matrix[:, None]
    with open(path, "w") as handle:
        for row in matrix:
            handle.write(",".join(format_float(x) for x in row))
            handle.write("\n")


def read_matrix_csv(path, columns=None):
    """Read a headerless numeric CSV into a 2-D float array.

    Ragged rows or non-numeric cells raise ParseError naming the file,
    row, and column.  ``columns`` (if given) is enforced.
    """
    rows = []
    width = None
    with open(path) as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            cells = line.split(",")
            if width is None:
                width = len(cells)
                if columns is not None and width != columns:
                    raise ParseError(
                        f"{path}: row {lineno} has {width} columns, expected {columns}"
                    )
            elif len(cells) != width:
                raise ParseError(
                    f"{path}: row {lineno} has {len(cells)} columns, "
                    f"previous rows have {width}"
                )
            parsed = []
            for col, cell in enumerate(cells, start=1):
                try:
                    parsed.append(float(cell))
                except ValueError:
                    raise ParseError(
                        f"{path}: row {lineno}, column {col}: "
                        f"{cell!r} is not a number"
                    ) from None
            rows.append(parsed)
    if not rows:
        raise ParseError(f"{path}: file contains no data rows")
    return np.array(rows, dtype=float)


def read_keyvalue(path):
    """Parse a key=value file into an ordered dict of strings.

    Blank lines and lines starting with '#' are skipped.  Duplicate keys
    and lines without '=' raise ParseError.
    """
    out = {}
    with open(path) as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ParseError(
                    f"{path}: line {lineno}: expected key=value, got {line!r}"
                )
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if not key:
                raise ParseError(f"{path}: line {lineno}: empty key")
            if key in out:
                raise ParseError(f"{path}: line {lineno}: duplicate key {key!r}")
            out[key] = value
    return out


def write_keyvalue(path, pairs):
    with open(path, "w") as handle:
        for key, value in pairs:
            handle.write(f"{key}={value}\n")


def write_dataset(data, directory):
    """Write manifest.txt plus per-task design/response CSVs; returns
    the manifest path."""
    os.makedirs(directory, exist_ok=True)
    pairs = [("n", data.n), ("M", data.M), ("T", data.T)]
    for t in range(data.T):
        design_name = f"task{t}_design.csv"
        response_name = f"task{t}_response.csv"
        write_matrix_csv(os.path.join(directory, design_name), data.designs[t])
        write_matrix_csv(os.path.join(directory, response_name), data.responses[t])
        pairs.append((f"design_{t}", design_name))
        pairs.append((f"response_{t}", response_name))
    manifest = os.path.join(directory, "manifest.txt")
    write_keyvalue(manifest, pairs)
    return manifest


def read_dataset(manifest_path):
    """Load a dataset from its manifest; validates every declared shape."""
    entries = read_keyvalue(manifest_path)
    base = os.path.dirname(os.path.abspath(manifest_path))

    def need_int(key):
        if key not in entries:
            raise ParseError(f"{manifest_path}: missing required key {key!r}")
        raw = entries.pop(key)
        try:
            return int(raw)
        except ValueError:
            raise ParseError(
                f"{manifest_path}: key {key!r} must be an integer, got {raw!r}"
            ) from None

    n = need_int("n")
    M = need_int("M")
    T = need_int("T")
    designs = np.empty((T, n, M))
    responses = np.empty((T, n))
    for t in range(T):
        for key, target, shape in (
            (f"design_{t}", designs, (n, M)),
            (f"response_{t}", responses, (n, 1)),
        ):
            if key not in entries:
                raise ParseError(f"{manifest_path}: missing required key {key!r}")
            path = os.path.join(base, entries.pop(key))
            matrix = read_matrix_csv(path, columns=shape[1])
            if matrix.shape != shape:
                raise ParseError(
                    f"{path}: expected {shape[0]} rows x {shape[1]} columns "
                    f"(manifest says n={n}, M={M}), got "
                    f"{matrix.shape[0]} x {matrix.shape[1]}"
                )
            target[t] = matrix if key.startswith("design") else matrix[:, 0]
    if entries:
        raise ParseError(
            f"{manifest_path}: unknown keys {sorted(entries)}"
        )
    return MultiTaskDataset(designs, responses)


def write_coefficients(beta, path):
    write_matrix_csv(path, beta.values)


def read_coefficients(path):
    return GroupCoefficients(read_matrix_csv(path))
