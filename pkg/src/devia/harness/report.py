"""Experiment reports: statistics, slope fits and deterministic persistence.

Reports are reproducible bit for bit from (config, seed): wall-clock time is
kept on the in-memory object for logging but never serialized, and every
random quantity (including bootstrap resampling) draws from counter-based
streams derived from the experiment seed.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from ..rng import stream

__all__ = [
    "CriterionResult",
    "ExperimentReport",
    "SampleStats",
    "sample_stats",
    "fit_loglog_slope",
    "config_hash",
]

SCHEMA = "devia-report/1"
BOOTSTRAP_RESAMPLES = 1000
_BOOTSTRAP_STREAM = 915001  # reserved stream id for bootstrap resampling


@dataclass(frozen=True)
class CriterionResult:
    """One pass/fail entry; ``tolerance`` states the acceptance rule."""

    name: str
    value: float
    tolerance: str
    passed: bool
    detail: dict = field(default_factory=dict)


def _jsonable(obj):
    """Recursively coerce numpy scalars/arrays to plain Python types."""
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    return obj


@dataclass
class ExperimentReport:
    kind: str
    config: dict
    seed: int
    stats: dict
    criteria: list[CriterionResult]
    work: dict = field(default_factory=dict)
    runtime_seconds: float | None = None  # logged, never serialized

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.criteria)

    @property
    def config_digest(self) -> str:
        return config_hash(self.config)

    def to_dict(self) -> dict:
        from .. import __version__

        return _jsonable(
            {
                "schema": SCHEMA,
                "kind": self.kind,
                "config": self.config,
                "config_hash": self.config_digest,
                "seed": self.seed,
                "tool_version": __version__,
                "stats": self.stats,
                "criteria": [asdict(c) for c in self.criteria],
                "work": self.work,
                "passed": self.passed,
            }
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2, allow_nan=False) + "\n"

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_json())

    def summary_lines(self) -> list[str]:
        out = [f"[{self.kind}] config {self.config_digest[:12]} seed {self.seed}"]
        for c in self.criteria:
            mark = "PASS" if c.passed else "FAIL"
            out.append(f"  {mark}  {c.name}: value={c.value:.6g}  ({c.tolerance})")
        return out


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


@dataclass(frozen=True)
class SampleStats:
    n: int
    mean: float
    variance: float
    stderr: float

    def to_dict(self) -> dict:
        return asdict(self)


def sample_stats(values: np.ndarray) -> SampleStats:
    values = np.asarray(values, dtype=float)
    n = len(values)
    mean = float(values.mean())
    var = float(values.var(ddof=1)) if n > 1 else 0.0
    return SampleStats(n=n, mean=mean, variance=var, stderr=float(np.sqrt(var / n)) if n > 1 else 0.0)


def fit_loglog_slope(
    ms: np.ndarray,
    samples: dict[int, np.ndarray],
    seed: int,
    resamples: int = BOOTSTRAP_RESAMPLES,
) -> dict:
    """OLS slope of log(mean) against log(m) with a bootstrap CI.

    ``samples[m]`` are the per-replica values at system size m; the bootstrap
    resamples replicas (the sup statistics are heavy-tailed, so a normal
    stderr on the log-means would be optimistic).
    """
    ms = np.asarray(sorted(ms))
    logm = np.log(ms)

    def slope_of(means: np.ndarray) -> float:
        return float(np.polyfit(logm, np.log(means), 1)[0])

    means = np.array([samples[m].mean() for m in ms])
    slope = slope_of(means)
    rng = stream(seed, _BOOTSTRAP_STREAM)
    boot = np.empty(resamples)
    for b in range(resamples):
        bm = np.array(
            [samples[m][rng.integers(0, len(samples[m]), len(samples[m]))].mean() for m in ms]
        )
        boot[b] = slope_of(bm)
    lo, hi = np.percentile(boot, [2.5, 97.5])
    return {
        "slope": slope,
        "ci_low": float(lo),
        "ci_high": float(hi),
        "means": {int(m): float(v) for m, v in zip(ms, means)},
    }
