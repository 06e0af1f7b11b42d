"""JSON-lines metrics log."""
from __future__ import annotations

import json
import math
import time
from pathlib import Path


def _clean(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if hasattr(v, "item"):
        return v.item()
    return v


class MetricsLogger:
    """Appends one JSON object per record; ``wall_clock`` is seconds since the logger opened."""

    def __init__(self, path, seed: int, include_wall_clock: bool = True):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.seed = seed
        self.include_wall_clock = include_wall_clock
        self._t0 = time.perf_counter()

    def log(self, record: dict) -> dict:
        rec = {k: _clean(v) for k, v in record.items()}
        rec["seed"] = self.seed
        if self.include_wall_clock:
            rec["wall_clock"] = round(time.perf_counter() - self._t0, 3)
        with open(self.path, "a", encoding="utf-8") as f:
            f.write(json.dumps(rec, sort_keys=True) + "\n")
        return rec


def read_metrics(path) -> list[dict]:
    return [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]
