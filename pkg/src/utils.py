import hashlib
import json
import os
from pathlib import Path
from typing import Any, Sequence

import numpy as np


# Safe write(os.replace)
def write_json(path: Path, obj: dict[str, Any]) -> None:
    tmp_path = path.with_suffix(path.suffix + ".tmp")

    with open(tmp_path, "w", encoding="utf-8") as f:
        json.dump(obj, f, indent=4, ensure_ascii=False)

    os.replace(tmp_path, path)


def read_json(path: Path) -> dict[str, Any]:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def write_csv(path: Path, columns: Sequence[str], rows: np.ndarray, fmt: str = "%.17g") -> None:
    """
    Write a numeric table with a one-line header, same safe-write as write_json.

    :param path: Destination file
    :param columns: Header names, one per column of rows
    :param rows: 2D array of shape (n, len(columns))
    :param fmt: printf-style format for every cell (default round-trips float64)
    """
    rows = np.asarray(rows)
    if rows.ndim != 2 or rows.shape[1] != len(columns):
        raise ValueError(f"rows must have shape (n, {len(columns)}), got {rows.shape}")

    tmp_path = path.with_suffix(path.suffix + ".tmp")
    with open(tmp_path, "w", encoding="utf-8", newline="\n") as f:
        np.savetxt(f, rows, fmt=fmt, delimiter=",", header=",".join(columns), comments="")

    os.replace(tmp_path, path)


def read_csv(path: Path) -> tuple[list[str], np.ndarray]:
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().strip().split(",")
        rows = np.loadtxt(f, delimiter=",", ndmin=2)

    if rows.size == 0:
        rows = rows.reshape(0, len(header))
    return header, rows


def file_sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def array_sha256(*arrays: np.ndarray) -> str:
    digest = hashlib.sha256()
    for array in arrays:
        array = np.ascontiguousarray(array)
        digest.update(f"{array.dtype.str}{array.shape}".encode("ascii"))
        digest.update(array.tobytes())
    return digest.hexdigest()


def canonical_hash(obj: Any) -> str:
    """SHA-256 of the canonical JSON form (sorted keys, no whitespace)."""
    payload = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def write_text(path: Path, text: str) -> None:
    tmp_path = path.with_suffix(path.suffix + ".tmp")

    with open(tmp_path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)

    os.replace(tmp_path, path)
