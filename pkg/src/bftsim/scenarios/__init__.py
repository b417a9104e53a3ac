"""Bundled scenario files (golden regressions and sweep presets)."""
from __future__ import annotations

from importlib import resources
from typing import Optional


def names() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files(__name__).iterdir() if p.name.endswith(".json"))


def bundled_path(name: str) -> Optional[str]:
    stem = name[:-5] if name.endswith(".json") else name
    p = resources.files(__name__) / f"{stem}.json"
    return str(p) if p.is_file() else None
