"""Delimited file formats for paths and grid fields.

All floats are written with the shortest round-tripping representation so
identical runs produce byte-identical files.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ..diff_analysis import GridField
from ..jump_sim import JumpPath
from ..paths import PathVec

__all__ = [
    "write_jump_path",
    "write_path_vec",
    "read_path_vec",
    "write_grid_field",
    "read_grid_field",
]


def _fmt(v: float) -> str:
    return repr(float(v))


def write_jump_path(path: JumpPath, out) -> None:
    """Event-time CSV: time, state_1..state_K (states after the event)."""
    K = path.counts.shape[1]
    lines = ["time," + ",".join(f"state_{k + 1}" for k in range(K))]
    states = path.states
    for t, row in zip(path.times, states):
        lines.append(",".join([_fmt(t)] + [_fmt(v) for v in row]))
    Path(out).write_text("\n".join(lines) + "\n")


def write_path_vec(path: PathVec, out) -> None:
    K = path.dim
    lines = ["time," + ",".join(f"state_{k + 1}" for k in range(K))]
    for t, row in zip(path.grid, path.values):
        lines.append(",".join([_fmt(t)] + [_fmt(v) for v in row]))
    Path(out).write_text("\n".join(lines) + "\n")


def read_path_vec(src) -> PathVec:
    """Read a time-indexed vector path from the jump-path CSV schema."""
    raw = np.genfromtxt(src, delimiter=",", skip_header=1)
    raw = np.atleast_2d(raw)
    return PathVec(raw[:, 0], raw[:, 1:])


def write_grid_field(field: GridField, out) -> None:
    """Grid CSV: header 't' followed by the spatial nodes, one row per step."""
    header = "t," + ",".join(_fmt(x) for x in field.xs)
    lines = [header]
    for t, row in zip(field.ts, field.values):
        lines.append(",".join([_fmt(t)] + [_fmt(v) for v in row]))
    Path(out).write_text("\n".join(lines) + "\n")


def read_grid_field(src) -> GridField:
    with open(src) as fh:
        header = fh.readline().strip().split(",")
        xs = np.array([float(v) for v in header[1:]])
        raw = np.atleast_2d(np.genfromtxt(fh, delimiter=","))
    return GridField(xs=xs, ts=raw[:, 0], values=raw[:, 1:])
