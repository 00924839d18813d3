"""Matrix CSV files, ``key = value`` config files and flat CSV rows."""
from __future__ import annotations

import csv
import io as _io
import math
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import InvalidInputError
from .system import SystemModel


def read_matrix(path) -> np.ndarray:
    """Row-major CSV without header."""
    path = Path(path)
    if not path.exists() or path.is_dir():
        raise InvalidInputError(f"matrix file not found: {path}")
    try:
        return np.loadtxt(path, delimiter=",", ndmin=2, dtype=float)
    except ValueError as exc:
        raise InvalidInputError(f"could not parse {path}: {exc}") from exc


def write_matrix(path, M) -> None:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    with open(path, "w", newline="") as fh:
        fh.write(format_matrix(M))


def format_matrix(M) -> str:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    return "".join(",".join(format_value(v) for v in row) + "\n" for row in M)


def parse_inline_matrix(text: str) -> np.ndarray:
    """``[1, 0; 0, 2]`` -> 2x2 array. Rows separated by ``;``."""
    body = text.strip()
    if not (body.startswith("[") and body.endswith("]")):
        raise InvalidInputError(f"not an inline matrix: {text!r}")
    rows = [r for r in body[1:-1].split(";") if r.strip()]
    try:
        data = [[float(v) for v in r.replace(",", " ").split()] for r in rows]
        return np.atleast_2d(np.array(data, dtype=float))
    except ValueError as exc:
        raise InvalidInputError(f"bad inline matrix {text!r}") from exc


def parse_key_values(text: str, source: str = "<config>") -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidInputError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise InvalidInputError(f"{source}:{lineno}: empty key")
        if key in out:
            raise InvalidInputError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def read_key_values(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise InvalidInputError(f"config file not found: {path}")
    return parse_key_values(path.read_text(), str(path))


def matrix_value(value: str, base: Path) -> np.ndarray:
    if value.strip().startswith("["):
        return parse_inline_matrix(value)
    p = Path(value)
    return read_matrix(p if p.is_absolute() else base / p)


def load_system(path) -> SystemModel:
    """Load a system from a directory of CSV files or from a ``key = value`` file.

    A directory holds ``Q.csv``, ``R.csv``, ``Sigma.csv``, ``A0.csv`` ... ``A{n_w}.csv``
    and ``B0.csv`` ... ``B{n_w}.csv``. A config file maps the same names (without
    extension) to CSV paths, relative to the file, or to inline ``[a, b; c, d]`` matrices.
    """
    path = Path(path)
    if path.is_dir():
        def get(name):
            return read_matrix(path / f"{name}.csv")
        Sigma = get("Sigma")
    elif path.is_file():
        kv = read_key_values(path)
        base = path.parent

        def get(name):
            if name not in kv:
                raise InvalidInputError(f"{path}: missing matrix {name!r}")
            return matrix_value(kv[name], base)
        Sigma = get("Sigma")
    else:
        raise InvalidInputError(f"system path not found: {path}")
    n_w = Sigma.shape[0]
    A = [get(f"A{i}") for i in range(n_w + 1)]
    B = [get(f"B{i}") for i in range(n_w + 1)]
    try:
        return SystemModel(np.array(A), np.array(B), get("Q"), get("R"), Sigma)
    except ValueError as exc:
        if isinstance(exc, InvalidInputError):
            raise
        raise InvalidInputError(f"inconsistent matrix shapes in {path}: {exc}") from exc


def save_system(path, system: SystemModel) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    write_matrix(path / "Q.csv", system.Q)
    write_matrix(path / "R.csv", system.R)
    write_matrix(path / "Sigma.csv", system.Sigma)
    for i, (A, B) in enumerate(zip(system.A_blocks, system.B_blocks)):
        write_matrix(path / f"A{i}.csv", A)
        write_matrix(path / f"B{i}.csv", B)


def format_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        return repr(v)
    return str(v)


def rows_to_csv(rows: Iterable[Mapping], fieldnames=None) -> str:
    rows = list(rows)
    if fieldnames is None:
        fieldnames = list(rows[0].keys()) if rows else []
    buf = _io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=fieldnames, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: format_value(row.get(k)) for k in fieldnames})
    return buf.getvalue()


def write_rows(path, rows, fieldnames=None) -> None:
    text = rows_to_csv(rows, fieldnames)
    with open(path, "w", newline="") as fh:
        fh.write(text)
