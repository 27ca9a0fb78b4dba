"""
Portable binary containers for spectra and embeddings.

A container is a plain sequence of ``.npy`` records: the first record holds a
UTF-8 JSON header (metadata plus the ordered list of array names), the rest
are the arrays in that order. Unlike ``.npz`` archives the bytes carry no
timestamps, so identical inputs produce identical files and content hashes.
"""

import json
from pathlib import Path
from typing import Any, Dict, Tuple

import numpy as np

from .exceptions import ParseError

MAGIC = "spectral-reg-container"
VERSION = 1


def write_container(path: Path, meta: Dict[str, Any], arrays: Dict[str, np.ndarray]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {"magic": MAGIC, "version": VERSION, "meta": meta, "arrays": list(arrays)}
    encoded = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        np.save(f, np.frombuffer(encoded, dtype=np.uint8), allow_pickle=False)
        for name in arrays:
            np.save(f, np.ascontiguousarray(arrays[name]), allow_pickle=False)
    return path


def read_container(path: Path) -> Tuple[Dict[str, Any], Dict[str, np.ndarray]]:
    """Read a container written by :func:`write_container`."""
    path = Path(path)
    try:
        with open(path, "rb") as f:
            header = json.loads(np.load(f, allow_pickle=False).tobytes().decode("utf-8"))
            if header.get("magic") != MAGIC:
                raise ParseError(f"{path}: not a spectral-reg container")
            arrays = {name: np.load(f, allow_pickle=False) for name in header["arrays"]}
    except (ValueError, EOFError, UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ParseError(f"{path}: unreadable container ({e})") from e
    return header["meta"], arrays
