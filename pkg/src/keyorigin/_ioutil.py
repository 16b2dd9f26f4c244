"""Small shared helpers for deterministic serialization and hashing."""

import hashlib
import json
from pathlib import Path


def canonical_json(obj) -> str:
    """Serialize to JSON with a stable byte representation.

    Keys are sorted and floats use their repr, so equal inputs always
    produce identical bytes (reproducibility contract of the CLI).
    """
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(canonical_json(obj), encoding="utf-8")


def read_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def int_to_hex(x: int) -> str:
    """Lowercase big-endian hex without prefix (JSONL key format)."""
    return format(x, "x")


def hex_to_int(s: str) -> int:
    return int(s, 16)
