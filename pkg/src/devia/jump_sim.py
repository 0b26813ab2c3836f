"""Exact event-driven simulation of the mean-field jump system.

The empirical measure of m particles moves by (e_j - e_i)/m jumps; the (i, j)
jump fires at rate m * q_i * Gamma_ij(q).  Simulation is Gillespie-style
(exponential waiting time at the current total rate, then a categorical cell
draw), which is distributionally exact; no time discretization enters.

Tilted (thinned) runs multiply the intensity on the control's support cells,
which are the cells of the deterministic limit path p.  Since the current
cell (i, j) and the support cell (i, j) are intervals anchored at the same
second-coordinate offset, their overlap has length min(q_i Gamma_ij(q),
p_i(s) Gamma_ij(p(s))), and the tilted (i, j) rate is

    m * [ q_i Gamma_ij(q) + psi_ij(s)/(a(m) sqrt(m)) * overlap(s) ].

The time dependence through p(s) is handled by exact rejection: candidate
events are proposed at a per-cell upper bound that is constant between events
and control-bin boundaries, then accepted with the ratio of the true rate to
the bound.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mf_model import RateModel, ell_cost
from .paths import PathVec
from .rng import stream

__all__ = [
    "JumpPath",
    "JumpControl",
    "simulate_jump",
    "simulate_tilted",
    "tilt_cost",
    "fluctuation_Z",
]


@dataclass(frozen=True)
class JumpPath:
    """Piecewise-constant trajectory of the empirical measure.

    ``counts[k]`` is the integer particle count vector right after the k-th
    event (row 0 is the initial configuration), so states are exact multiples
    of 1/m and mass is conserved exactly.
    """

    times: np.ndarray  # (n+1,) event times, times[0] = 0
    counts: np.ndarray  # (n+1, K) integer counts
    m: int
    T: float

    @property
    def states(self) -> np.ndarray:
        return self.counts / self.m

    @property
    def n_events(self) -> int:
        return len(self.times) - 1

    def state_at(self, t: float) -> np.ndarray:
        idx = int(np.searchsorted(self.times, t, side="right") - 1)
        return self.counts[max(idx, 0)] / self.m

    def sample(self, grid: np.ndarray) -> np.ndarray:
        """States on an arbitrary time grid (piecewise-constant, cadlag)."""
        idx = np.clip(np.searchsorted(self.times, grid, side="right") - 1, 0, None)
        return self.counts[idx] / self.m


@dataclass(frozen=True)
class JumpControl:
    """Per-cell control field, piecewise constant on uniform time bins.

    ``psi[k, i-1, j-1]`` is the value on cell (i, j) during bin k.  The field
    is taken right-continuous in time; the value at or beyond the horizon is
    that of the last bin.
    """

    edges: np.ndarray  # (B+1,) uniform bin edges spanning [0, T]
    psi: np.ndarray  # (B, K, K), zero diagonal

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=float)
        psi = np.asarray(self.psi, dtype=float)
        if len(edges) < 2 or np.any(np.diff(edges) <= 0):
            raise ValueError("bin edges must be strictly increasing")
        if psi.ndim != 3 or psi.shape[0] != len(edges) - 1 or psi.shape[1] != psi.shape[2]:
            raise ValueError("psi must have shape (n_bins, K, K)")
        psi = psi.copy()
        idx = np.arange(psi.shape[1])
        psi[:, idx, idx] = 0.0
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "psi", psi)

    @property
    def K(self) -> int:
        return self.psi.shape[1]

    @property
    def T(self) -> float:
        return float(self.edges[-1])

    def bin_index(self, t) -> np.ndarray:
        return np.clip(
            np.searchsorted(self.edges, t, side="right") - 1, 0, len(self.edges) - 2
        )

    def value(self, t) -> np.ndarray:
        """psi(t), shape (K, K) for scalar t, (n, K, K) for array t."""
        return self.psi[self.bin_index(np.asarray(t, dtype=float))]

    @classmethod
    def zero(cls, K: int, T: float, n_bins: int = 1) -> "JumpControl":
        return cls(np.linspace(0.0, T, n_bins + 1), np.zeros((n_bins, K, K)))

    @classmethod
    def constant(cls, K: int, T: float, entries: dict, n_bins: int = 1) -> "JumpControl":
        """Control that is constant in time; entries maps (i, j) -> value."""
        psi = np.zeros((n_bins, K, K))
        for (i, j), v in entries.items():
            if i == j:
                raise ValueError("control lives on off-diagonal cells")
            psi[:, i - 1, j - 1] = v
        return cls(np.linspace(0.0, T, n_bins + 1), psi)


def _counts_from_q0(q0: np.ndarray, m: int) -> np.ndarray:
    q0 = np.asarray(q0, dtype=float)
    counts = np.rint(q0 * m)
    if np.any(np.abs(counts - q0 * m) > 1e-9) or int(counts.sum()) != m or np.any(counts < 0):
        raise ValueError("initial state entries must be nonnegative multiples of 1/m")
    return counts.astype(np.int64)


def simulate_jump(
    model: RateModel, m: int, q0: np.ndarray, T: float, seed: int, replica: int = 0
) -> JumpPath:
    """Exact trajectory of the empirical measure up to time T.

    Waiting times are exponential at the total rate m * sum q_i Gamma_ij(q);
    the jumping cell is drawn proportionally to q_i Gamma_ij(q).  A state with
    zero total rate is absorbing and the path stays constant to T.
    """
    counts = _counts_from_q0(q0, m)
    rng = stream(seed, replica)
    t = 0.0
    times = [0.0]
    hist = [counts.copy()]
    while True:
        rates = counts[:, None] * model.rate_matrix(counts / m)  # events per unit time
        total = float(rates.sum())
        if total <= 0.0:
            break
        t += rng.exponential(1.0 / total)
        if t >= T:
            break
        flat = np.cumsum(rates.ravel())
        cell = int(np.searchsorted(flat, rng.random() * total, side="right"))
        i, j = divmod(cell, model.K)
        counts[i] -= 1
        counts[j] += 1
        times.append(t)
        hist.append(counts.copy())
    return JumpPath(np.array(times), np.array(hist), m=m, T=float(T))


def _check_phi_nonnegative(control: JumpControl, a_scale: float) -> None:
    bad = np.argwhere(1.0 + control.psi / a_scale < 0.0)
    if len(bad):
        k, i, j = bad[0]
        raise ValueError(
            f"thinning factor negative on cell ({i + 1},{j + 1}) in bin {k}: "
            f"psi={control.psi[k, i, j]:.6g}, a(m)*sqrt(m)={a_scale:.6g}"
        )


def simulate_tilted(
    model: RateModel,
    m: int,
    q0: np.ndarray,
    T: float,
    control: JumpControl,
    a_m: float,
    p_path: PathVec,
    seed: int,
    replica: int = 0,
) -> tuple[JumpPath, float]:
    """Tilted trajectory under the control field, plus the control cost.

    The (i, j) intensity is the exact overlap rule described in the module
    docstring; rejection against a per-bin constant bound makes the draw
    exact.  The returned cost is the deterministic thinning cost of the
    control field (see :func:`tilt_cost`).
    """
    counts = _counts_from_q0(q0, m)
    a_scale = a_m * np.sqrt(m)
    _check_phi_nonnegative(control, a_scale)
    rng = stream(seed, replica)
    edges = control.edges
    t = 0.0
    times = [0.0]
    hist = [counts.copy()]
    while t < T:
        k = int(np.clip(np.searchsorted(edges, t, side="right") - 1, 0, len(edges) - 2))
        bin_end = min(float(edges[k + 1]), T)
        psi = control.psi[k]
        rates = counts[:, None] * model.rate_matrix(counts / m)
        bound = rates * (1.0 + np.maximum(psi, 0.0) / a_scale)
        total = float(bound.sum())
        if total <= 0.0:
            t = bin_end
            continue
        t_prop = t + rng.exponential(1.0 / total)
        if t_prop > bin_end:
            t = bin_end
            continue
        t = t_prop
        flat = np.cumsum(bound.ravel())
        cell = int(np.searchsorted(flat, rng.random() * total, side="right"))
        i, j = divmod(cell, model.K)
        # exact rate at the proposed time: overlap with the support cell of p
        p_t = p_path(t)
        w_p = m * p_t[i] * model.rate_matrix(p_t)[i, j]
        actual = rates[i, j] + (psi[i, j] / a_scale) * min(rates[i, j], w_p)
        if rng.random() * bound[i, j] <= actual:
            counts[i] -= 1
            counts[j] += 1
            times.append(t)
            hist.append(counts.copy())
    return JumpPath(np.array(times), np.array(hist), m=m, T=float(T)), tilt_cost(
        model, control, a_m, m, p_path
    )


def tilt_cost(
    model: RateModel, control: JumpControl, a_m: float, m: int, p_path: PathVec
) -> float:
    """Thinning cost of the control field: integral of ell(phi) against the
    intensity measure, with phi = 1 + psi/(a(m) sqrt(m)) on the support cells
    of p and 1 elsewhere.

    ell(phi) is constant per cell and bin, so the integral reduces to per-cell
    integrals of the support-cell measure p_i(s) Gamma_ij(p(s)) over each bin;
    those are evaluated by the trapezoid rule on the grid of p.
    """
    a_scale = a_m * np.sqrt(m)
    _check_phi_nonnegative(control, a_scale)
    ts = p_path.grid
    W = _cell_weights(model, p_path)  # (N, K, K)
    phi = 1.0 + control.value(ts) / a_scale  # (N, K, K), right-continuous
    dens = (ell_cost(phi.ravel()).reshape(phi.shape) * W).sum(axis=(1, 2))
    return float(np.trapezoid(dens, ts))


def _cell_weights(model: RateModel, p_path: PathVec) -> np.ndarray:
    """Support-cell measures p_i(t) Gamma_ij(p(t)) on the grid of p."""
    P = p_path.values
    G = model.rates_batch(P)
    return P[:, :, None] * G


def fluctuation_Z(path: JumpPath, p_path: PathVec, a_m: float) -> PathVec:
    """Scaled deviation a(m) sqrt(m) (mu^m(t) - p(t)) on the merged grid."""
    if path.counts.shape[1] != p_path.dim:
        raise ValueError("path and limit path have different state dimensions")
    if abs(path.T - p_path.T) > 1e-12:
        raise ValueError("path and limit path have different horizons")
    grid = np.unique(np.concatenate([path.times, p_path.grid]))
    grid = grid[(grid >= 0) & (grid <= path.T)]
    vals = a_m * np.sqrt(path.m) * (path.sample(grid) - p_path(grid))
    return PathVec(grid, vals)


# ---------------------------------------------------------------------------
# batched kernel for Monte Carlo experiments


class _ReplicaRandoms:
    """Per-replica uniform streams consumed in lockstep.

    Each replica owns a Philox stream keyed by (seed, replica id) and
    consumes from it only on its own events, so results are identical no
    matter how replicas are grouped into batches or workers.
    """

    def __init__(self, seed: int, replica_ids: np.ndarray, block: int = 2048):
        self.gens = [stream(seed, int(r)) for r in replica_ids]
        self.block = block
        self.buf = np.stack([g.random(block) for g in self.gens])
        self.ptr = np.zeros(len(self.gens), dtype=np.int64)

    def draw(self, mask: np.ndarray) -> np.ndarray:
        """One uniform per masked replica; unmasked rows return junk."""
        need = np.nonzero(self.ptr >= self.block)[0]
        for r in need:
            self.buf[r] = self.gens[r].random(self.block)
            self.ptr[r] = 0
        out = self.buf[np.arange(len(self.gens)), self.ptr]
        self.ptr += mask.astype(np.int64)
        return out


def batch_paths(
    model: RateModel,
    m: int,
    q0: np.ndarray,
    T: float,
    seed: int,
    replicas: np.ndarray,
    *,
    control: JumpControl | None = None,
    a_m: float | None = None,
    p_path: PathVec | None = None,
    ref: PathVec | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Run many replicas at once; returns (sup_dev, final_counts).

    ``sup_dev[r]`` is the running maximum of || mu^m(t) - ref(t) || observed
    at t = 0, at every event (state before and after the jump), at control
    bin boundaries and at T.  When ``ref`` is None the deviation is reported
    as 0 and only the final counts matter.  Tilted dynamics are enabled by
    passing (control, a_m, p_path) together.
    """
    replicas = np.asarray(replicas, dtype=np.int64)
    R = len(replicas)
    K = model.K
    counts0 = _counts_from_q0(q0, m)
    tilted = control is not None
    if tilted:
        if a_m is None or p_path is None:
            raise ValueError("tilted runs need a_m and p_path")
        a_scale = a_m * np.sqrt(m)
        _check_phi_nonnegative(control, a_scale)
        edges = control.edges

    rnd = _ReplicaRandoms(seed, replicas)
    t = np.zeros(R)
    counts = np.tile(counts0, (R, 1)).astype(np.int64)
    sup_dev = np.zeros(R)
    alive = np.ones(R, dtype=bool)

    def observe(mask, at):
        if ref is None or not mask.any():
            return
        dev = np.linalg.norm(counts[mask] / m - ref(at[mask]), axis=1)
        np.maximum.at(sup_dev, np.nonzero(mask)[0], dev)

    observe(alive, t)
    while alive.any():
        q = counts / m
        rates = counts[:, :, None] * model.rates_batch(q)  # (R, K, K)
        if tilted:
            k = np.clip(np.searchsorted(edges, t, side="right") - 1, 0, len(edges) - 2)
            psi = control.psi[k]
            bound = rates * (1.0 + np.maximum(psi, 0.0) / a_scale)
            cap = np.minimum(edges[k + 1], T)
        else:
            bound = rates
            cap = np.full(R, T)
        total = bound.sum(axis=(1, 2))
        u_wait = rnd.draw(alive)
        with np.errstate(divide="ignore"):
            dt = -np.log1p(-u_wait) / total
        t_prop = np.where(total > 0.0, t + dt, np.inf)

        crossed = alive & (t_prop > cap)
        fired = alive & ~crossed

        # replicas that hit a bin boundary (or the horizon) just move there
        t = np.where(crossed, cap, t)
        observe(crossed, t)

        if fired.any():
            t = np.where(fired, t_prop, t)
            observe(fired, t)  # state before the jump, at the new time
            flat = bound.reshape(R, K * K).cumsum(axis=1)
            u_pick = rnd.draw(fired) * total
            # ties at cumsum boundaries must resolve past zero-weight cells
            cell = (flat <= u_pick[:, None]).sum(axis=1).clip(0, K * K - 1)
            ci, cj = np.divmod(cell, K)
            rows = np.arange(R)
            b_cell = bound[rows, ci, cj]
            accept = fired & (b_cell > 0.0)
            if tilted:
                r_cell = rates[rows, ci, cj]
                p_t = p_path(t)
                w_p = m * p_t[rows, ci] * model.rates_batch(p_t)[rows, ci, cj]
                actual = r_cell + (psi[rows, ci, cj] / a_scale) * np.minimum(r_cell, w_p)
                u_acc = rnd.draw(fired)
                with np.errstate(invalid="ignore"):
                    accept &= u_acc * b_cell <= actual
            if accept.any():
                rows = np.nonzero(accept)[0]
                np.subtract.at(counts, (rows, ci[rows]), 1)
                np.add.at(counts, (rows, cj[rows]), 1)
                observe(accept, t)

        alive &= t < T
    return sup_dev, counts
