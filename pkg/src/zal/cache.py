"""Append-only CSV cache of evaluations.

Columns: kind, n, sigma, t, prec, re, im, err. When a key appears more than
once the row with the smallest err wins. Rows that fail to parse are skipped
and counted in ``EvalCache.skipped``.
"""

from __future__ import annotations

import csv
import logging
import os
import threading
from pathlib import Path

log = logging.getLogger(__name__)

COLUMNS = ("kind", "n", "sigma", "t", "prec", "re", "im", "err")
ENV_VAR = "ZAL_CACHE"


def resolve_cache_path(value=None) -> Path | None:
    """Explicit setting (flag or config file), else $ZAL_CACHE; None disables caching."""
    for v in (value, os.environ.get(ENV_VAR)):
        if v:
            return Path(v)
    return None


class EvalCache:
    def __init__(self, path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._rows: dict = {}
        self.skipped = 0
        if self.path.exists():
            self._load()

    @staticmethod
    def key(kind: str, n: int, sigma: float, t: float, prec: float):
        return (str(kind), int(n), float(sigma), float(t), float(prec))

    def _load(self):
        with open(self.path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None:
                return
            if tuple(header) != COLUMNS:
                self.skipped += 1
            for row in reader:
                try:
                    if len(row) != len(COLUMNS):
                        raise ValueError("wrong column count")
                    k = self.key(row[0], int(row[1]), float(row[2]), float(row[3]), float(row[4]))
                    val = (float(row[5]), float(row[6]), float(row[7]))
                    if not val[2] >= 0:
                        raise ValueError("negative error")
                except ValueError:
                    self.skipped += 1
                    continue
                self._keep(k, val)
        if self.skipped:
            log.warning("cache %s: skipped %d corrupt row(s)", self.path, self.skipped)

    def _keep(self, k, val):
        old = self._rows.get(k)
        if old is None or val[2] < old[2]:
            self._rows[k] = val

    def get(self, kind, n, sigma, t, prec):
        """(re, im, err) or None."""
        with self._lock:
            return self._rows.get(self.key(kind, n, sigma, t, prec))

    def put(self, kind, n, sigma, t, prec, re, im, err):
        k = self.key(kind, n, sigma, t, prec)
        val = (float(re), float(im), float(err))
        with self._lock:
            new = not self.path.exists() or self.path.stat().st_size == 0
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", newline="") as fh:
                w = csv.writer(fh)
                if new:
                    w.writerow(COLUMNS)
                w.writerow([k[0], k[1], repr(k[2]), repr(k[3]), repr(k[4])] + [repr(v) for v in val])
            self._keep(k, val)

    def __len__(self):
        return len(self._rows)


def cache_io(path) -> EvalCache:
    return EvalCache(path)
