"""Deterministic text output: JSON and CSV with floats at 17 significant digits."""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np


def format_float(x: float) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def _plain(obj: Any) -> Any:
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, (tuple, set, frozenset)):
        return list(obj)
    return obj


def dumps(obj: Any, indent: int = 2) -> str:
    """JSON text with fixed float formatting; non-finite floats become null.

    Key order is preserved, so equal inputs give byte-identical output.
    """
    parts: list[str] = []

    def emit(o, level):
        o = _plain(o)
        pad = "\n" + " " * (indent * (level + 1))
        end = "\n" + " " * (indent * level)
        if o is None or o is True or o is False:
            parts.append(json.dumps(o))
        elif isinstance(o, int):
            parts.append(str(o))
        elif isinstance(o, float):
            parts.append(format_float(o) if math.isfinite(o) else "null")
        elif isinstance(o, str):
            parts.append(json.dumps(o))
        elif isinstance(o, dict):
            if not o:
                parts.append("{}")
                return
            parts.append("{")
            for i, (k, v) in enumerate(o.items()):
                parts.append(("," if i else "") + pad + json.dumps(str(k)) + ": ")
                emit(v, level + 1)
            parts.append(end + "}")
        elif isinstance(o, list):
            if not o:
                parts.append("[]")
                return
            if all(not isinstance(_plain(v), (dict, list)) for v in o):
                parts.append("[")
                for i, v in enumerate(o):
                    if i:
                        parts.append(", ")
                    emit(v, level + 1)
                parts.append("]")
                return
            parts.append("[")
            for i, v in enumerate(o):
                parts.append(("," if i else "") + pad)
                emit(v, level + 1)
            parts.append(end + "]")
        else:
            raise TypeError(f"cannot serialise {type(o).__name__}")

    emit(obj, 0)
    return "".join(parts) + "\n"


def csv_text(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for v in row:
            v = _plain(v)
            if isinstance(v, bool) or isinstance(v, str):
                cells.append(str(v))
            elif isinstance(v, int):
                cells.append(str(v))
            else:
                cells.append(format_float(v))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def digest(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


MANIFEST_NAME = "manifest.json"


def write_artifacts(out_dir: Path, files: dict[str, str]) -> list[Path]:
    """Write every ``name -> text`` pair plus a manifest listing them all
    with their SHA-256. Nothing is written until all texts exist."""
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "files": [{"name": name, "sha256": digest(text)} for name, text in sorted(files.items())]
        + [{"name": MANIFEST_NAME, "sha256": None}]
    }
    written = []
    for name, text in {**files, MANIFEST_NAME: dumps(manifest)}.items():
        path = out_dir / name
        path.write_text(text)
        written.append(path)
    return written
