"""Deterministic serialization helpers.

Reports round-trip floats at 12 significant digits; checkpoints use Python's
shortest-exact float repr so reloads are bit-identical.
"""

from __future__ import annotations

import hashlib
import json
from typing import Any


def format_float(x: float) -> str:
    """Render a float with 12 significant digits for CSV/report output."""
    return f"{float(x):.12g}"


def round_float(x: float) -> float:
    """Round to the 12-significant-digit grid used by report writers."""
    return float(format_float(x))


def canonical_dumps(obj: Any) -> str:
    """JSON with sorted keys and fixed separators; stable across runs."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_of_obj(obj: Any) -> str:
    return sha256_hex(canonical_dumps(obj).encode("utf-8"))
