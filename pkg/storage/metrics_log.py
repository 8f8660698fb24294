"""
Append-only CSV of per-iteration training metrics.
"""
import csv
from pathlib import Path
from typing import Dict, List, Union

from utils.logger import get_logger

logger = get_logger(__name__)

COLUMNS = ["iteration", "L_color", "L_trans", "L_reg", "total", "s", "wall_time_ms"]


class MetricsLog:
    """One CSV row per training iteration."""

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        if not self.path.exists():
            with open(self.path, "w", newline="", encoding="utf-8") as f:
                csv.DictWriter(f, fieldnames=COLUMNS).writeheader()

    def append(self, row: Dict[str, float]) -> None:
        with open(self.path, "a", newline="", encoding="utf-8") as f:
            csv.DictWriter(f, fieldnames=COLUMNS).writerow({k: row[k] for k in COLUMNS})

    def rows(self) -> List[Dict[str, float]]:
        with open(self.path, "r", newline="", encoding="utf-8") as f:
            return [{k: float(v) for k, v in r.items()} for r in csv.DictReader(f)]

    def truncate_after(self, iteration: int) -> None:
        """Drop rows past iteration, so a resumed run continues the file cleanly."""
        kept = [r for r in self.rows() if r["iteration"] <= iteration]
        with open(self.path, "w", newline="", encoding="utf-8") as f:
            writer = csv.DictWriter(f, fieldnames=COLUMNS)
            writer.writeheader()
            for r in kept:
                writer.writerow({**r, "iteration": int(r["iteration"])})
        logger.debug(f"Metrics truncated to {len(kept)} rows at iteration {iteration}")
