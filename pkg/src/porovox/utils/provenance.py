"""Canonical JSON and configuration hashing for report provenance."""

import hashlib
import json
import math
from typing import Any

import numpy as np
from pydantic import BaseModel


def _plain(obj: Any) -> Any:
    if isinstance(obj, BaseModel):
        return _plain(obj.model_dump(mode="json", by_alias=True))
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, np.generic):
        return _plain(obj.item())
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def canonical_json(obj: Any, indent: int | None = None) -> str:
    """JSON with sorted keys and full float precision.

    Non-finite floats become ``null`` so the text is valid JSON.
    """
    separators = (",", ":") if indent is None else (",", ": ")
    return json.dumps(_plain(obj), sort_keys=True, indent=indent, separators=separators, ensure_ascii=False)


def config_hash(obj: Any) -> str:
    """sha256 of the canonical JSON; equal for equivalent configurations."""
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()


def fold_seed(seed: int, *keys: int) -> int:
    """Derived 32-bit seed for a fold, cell or volume."""
    return int(np.random.SeedSequence([seed, *keys]).generate_state(1)[0])
