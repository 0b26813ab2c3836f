"""Particle simulation for the mean-field diffusion model.

All particles move by Euler-Maruyama with mean-field coefficients: the
diffusion and drift at a particle are the empirical averages of the kernels
over the whole ensemble.  Controlled runs add a scaled control drift
sigma * u / (a(m) sqrt(m)) and account its quadratic cost.  The reference
(McKean-Vlasov) ensemble is the same dynamics run at a large particle count,
exposing measure pairings and a kernel density.

Noise is drawn per step from the replica's own counter-based stream, one
standard normal per particle, so a controlled system of size m and a
reference ensemble driven by the same stream share Brownian increments by
particle index (the coupling construction; see :func:`run_coupled`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .kernels import KernelPair, MeasureHook
from .rng import stream

__all__ = [
    "DiffusionPath",
    "McKeanEnsemble",
    "OccupationMeasure",
    "simulate_interacting",
    "simulate_controlled",
    "mckean_ensemble",
    "fluctuation_pairing",
    "coupling_gap",
    "occupation_accumulate",
    "richardson_gap",
    "run_coupled",
]

Control = Callable[[float, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class DiffusionPath:
    """Recorded ensemble trajectory; positions[k, i] is particle i at times[k]."""

    times: np.ndarray  # (n_rec,)
    positions: np.ndarray  # (n_rec, m)
    dt: float

    @property
    def m(self) -> int:
        return self.positions.shape[1]

    def index_of(self, t: float) -> int:
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > 1e-9 * max(1.0, self.times[-1]):
            raise ValueError(f"time {t} is not on the recorded grid")
        return k

    def hook(self, t: float) -> MeasureHook:
        """Empirical measure at a recorded time."""
        x = self.positions[self.index_of(t)]
        return MeasureHook(points=x, weights=np.full(len(x), 1.0 / len(x)))


def _em_run(
    kernels: KernelPair,
    m: int,
    x0: float,
    T: float,
    dt: float,
    rng: np.random.Generator,
    control: Control | None,
    a_scale: float,
    record_stride: int,
) -> tuple[DiffusionPath, float]:
    if dt <= 0 or m < 1:
        raise ValueError("need dt > 0 and m >= 1")
    n_steps = int(round(T / dt))
    if abs(n_steps * dt - T) > 1e-9 * max(T, 1.0):
        raise ValueError("horizon must be a multiple of the step size")
    x = np.full(m, float(x0))
    rec_idx = list(range(0, n_steps + 1, record_stride))
    if rec_idx[-1] != n_steps:
        rec_idx.append(n_steps)
    rec = np.empty((len(rec_idx), m))
    rec_times = np.array([k * dt for k in rec_idx])
    rec[0] = x
    weights = np.full(m, 1.0 / m)
    sqdt = math.sqrt(dt)
    cost = 0.0
    pos = 1
    for k in range(n_steps):
        mu = MeasureHook(points=x, weights=weights)
        sig = kernels.sigma(x, mu)
        drift = kernels.drift(x, mu)
        step = drift * dt + sig * sqdt * rng.standard_normal(m)
        if control is not None:
            u = np.broadcast_to(np.asarray(control(k * dt, x), dtype=float), x.shape)
            cost += float(np.dot(u, u)) * dt / (2.0 * m)
            step = step + sig * u * (dt / a_scale)
        x = x + step
        if not np.all(np.isfinite(x)):
            bad = int(np.nonzero(~np.isfinite(x))[0][0])
            raise FloatingPointError(
                f"particle {bad} left the finite range at step {k + 1} (t={k * dt + dt:.6g})"
            )
        if pos < len(rec_idx) and k + 1 == rec_idx[pos]:
            rec[pos] = x
            pos += 1
    return DiffusionPath(times=rec_times, positions=rec, dt=dt), cost


def simulate_interacting(
    kernels: KernelPair,
    m: int,
    x0: float,
    T: float,
    dt: float | None = None,
    seed: int = 0,
    replica: int = 0,
    record_stride: int = 1,
) -> DiffusionPath:
    """Euler-Maruyama trajectory of the interacting system of m particles.

    Default step T/2048.  The scheme is strong order 1/2 (weak order 1);
    discretization error is checked by :func:`richardson_gap`, which couples
    a run at dt against one at dt/2 on the same Brownian path.
    """
    rng = stream(seed, replica)
    if dt is None:
        dt = T / 2048
    path, _ = _em_run(kernels, m, x0, T, dt, rng, None, 1.0, record_stride)
    return path


def simulate_controlled(
    kernels: KernelPair,
    m: int,
    x0: float,
    T: float,
    dt: float | None,
    a_m: float,
    control: Control,
    seed: int,
    replica: int = 0,
    record_stride: int = 1,
) -> tuple[DiffusionPath, float]:
    """Controlled system with drift perturbation sigma * u / (a(m) sqrt(m)).

    ``control(s, x)`` must return values broadcastable to the particle array.
    The returned cost is the step sum of sum_i u_i^2 * dt / (2m), matching
    the quadratic cost of the controlled representation exactly.
    """
    rng = stream(seed, replica)
    if dt is None:
        dt = T / 2048
    return _em_run(
        kernels, m, x0, T, dt, rng, control, a_m * math.sqrt(m), record_stride
    )


def richardson_gap(
    kernels: KernelPair,
    m: int,
    x0: float,
    T: float,
    dt: float | None = None,
    seed: int = 0,
    replica: int = 0,
) -> float:
    """Discretization-error guard: mean squared final-time gap between a run
    at dt and one at dt/2 driven by the same Brownian path.

    The half-step run consumes the two fine increments whose sum is the
    coarse increment, so the gap isolates the time-stepping error.
    """
    if dt is None:
        dt = T / 2048
    n_steps = int(round(T / dt))
    if abs(n_steps * dt - T) > 1e-9 * max(T, 1.0):
        raise ValueError("horizon must be a multiple of the step size")
    rng = stream(seed, replica)
    weights = np.full(m, 1.0 / m)
    xc = np.full(m, float(x0))
    xf = np.full(m, float(x0))
    sq_c = math.sqrt(dt)
    sq_f = math.sqrt(dt / 2.0)
    inv_sqrt2 = 1.0 / math.sqrt(2.0)
    for _ in range(n_steps):
        z1 = rng.standard_normal(m)
        z2 = rng.standard_normal(m)
        for z in (z1, z2):
            mu = MeasureHook(points=xf, weights=weights)
            xf = xf + kernels.drift(xf, mu) * (dt / 2.0) + kernels.sigma(xf, mu) * sq_f * z
        mu = MeasureHook(points=xc, weights=weights)
        xc = xc + kernels.drift(xc, mu) * dt + kernels.sigma(xc, mu) * sq_c * (z1 + z2) * inv_sqrt2
    return float(np.mean((xc - xf) ** 2))


@dataclass(frozen=True)
class McKeanEnsemble:
    """Large-ensemble stand-in for the limit law mu(t)."""

    path: DiffusionPath

    def pairing(self, t: float, f: Callable[[np.ndarray], np.ndarray]) -> float:
        """<mu(t), f> as the ensemble average at a recorded time."""
        return self.path.hook(t).pair(f)

    def hook(self, t: float) -> MeasureHook:
        return self.path.hook(t)

    def density(self, t: float, xs: np.ndarray) -> np.ndarray:
        """Gaussian KDE of mu(t) with the normal-reference bandwidth."""
        x = self.path.positions[self.path.index_of(t)]
        h = 1.06 * max(float(np.std(x)), 1e-12) * len(x) ** (-0.2)
        xs = np.asarray(xs, dtype=float)
        out = np.zeros_like(xs)
        for lo in range(0, len(x), 4096):
            blk = x[lo : lo + 4096]
            out += np.exp(-((xs[:, None] - blk[None, :]) ** 2) / (2 * h * h)).sum(axis=1)
        return out / (len(x) * h * math.sqrt(2 * math.pi))


def mckean_ensemble(
    kernels: KernelPair,
    M_ref: int,
    x0: float,
    T: float,
    dt: float,
    seed: int,
    replica: int = 0,
    record_stride: int = 1,
) -> McKeanEnsemble:
    """Reference ensemble approximating the limit law; its own mean-field
    feedback error is O(1/M_ref) and should dominate nothing it is compared
    against, so pick M_ref well above every m of interest."""
    return McKeanEnsemble(
        simulate_interacting(kernels, M_ref, x0, T, dt, seed, replica, record_stride)
    )


def fluctuation_pairing(
    path: DiffusionPath,
    ref: McKeanEnsemble,
    a_m: float,
    phi: Callable[[np.ndarray], np.ndarray],
) -> tuple[np.ndarray, np.ndarray]:
    """Centered, scaled pairing t -> a(m) sqrt(m) (<mu^m(t), phi> - <mu(t), phi>)
    on the common recorded grid."""
    if not np.allclose(path.times, ref.path.times, rtol=0, atol=1e-12):
        raise ValueError("paths must share the recorded time grid")
    scale = a_m * math.sqrt(path.m)
    vals = np.array(
        [
            scale
            * (float(np.mean(phi(path.positions[k]))) - float(np.mean(phi(ref.path.positions[k]))))
            for k in range(len(path.times))
        ]
    )
    return path.times.copy(), vals


def coupling_gap(path: DiffusionPath, ref: McKeanEnsemble | DiffusionPath) -> float:
    """Mean over particles of the squared sup-distance to the reference
    particle with the same index: (1/m) sum_i sup_t |X_i(t) - Xbar_i(t)|^2.

    Both trajectories must be recorded on the same grid and driven by the
    same per-index Brownian increments for the value to be meaningful.
    """
    ref_path = ref.path if isinstance(ref, McKeanEnsemble) else ref
    if ref_path.positions.shape[1] < path.m:
        raise ValueError("reference ensemble smaller than the controlled system")
    if not np.allclose(path.times, ref_path.times, rtol=0, atol=1e-12):
        raise ValueError("paths must share the recorded time grid")
    diff = path.positions - ref_path.positions[:, : path.m]
    return float(np.mean(np.max(diff**2, axis=0)))


@dataclass(frozen=True)
class OccupationMeasure:
    """Samples (control value, position, time) with weights dt/m."""

    y: np.ndarray
    x: np.ndarray
    s: np.ndarray
    w: np.ndarray

    @property
    def total_weight(self) -> float:
        return float(self.w.sum())

    def pair(self, f: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]) -> float:
        return float(np.dot(self.w, f(self.y, self.x, self.s)))

    def pair_xs(self, f: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> float:
        """Pairing of the (position, time) marginal against f(x, s)."""
        return float(np.dot(self.w, f(self.x, self.s)))

    def cost(self) -> float:
        """1/2 * integral y^2 d(nu): equals the controlled run's cost."""
        return 0.5 * float(np.dot(self.w, self.y**2))


def occupation_accumulate(path: DiffusionPath, control: Control) -> OccupationMeasure:
    """Occupation measure of a controlled run recorded at every step.

    Control values are re-evaluated at the recorded (time, position) pairs,
    which reproduces the simulation's own draws since controls are plain
    functions of (s, x).
    """
    if len(path.times) < 2 or not np.allclose(np.diff(path.times), path.dt):
        raise ValueError("occupation accumulation needs a full-resolution recording")
    m = path.m
    n_steps = len(path.times) - 1
    ys = np.empty((n_steps, m))
    for k in range(n_steps):
        ys[k] = np.broadcast_to(
            np.asarray(control(path.times[k], path.positions[k]), dtype=float), (m,)
        )
    xs = path.positions[:-1]
    ss = np.broadcast_to(path.times[:-1, None], (n_steps, m))
    w = np.full(n_steps * m, path.dt / m)
    return OccupationMeasure(y=ys.ravel(), x=xs.ravel(), s=ss.ravel().copy(), w=w)


def run_coupled(
    kernels: KernelPair,
    ms: list[int],
    M_ref: int,
    x0: float,
    T: float,
    dt: float,
    theta: float,
    control: Control,
    seed: int,
    replica: int = 0,
) -> dict[int, float]:
    """One replica of the coupling experiment, all system sizes in lockstep.

    A single per-step increment array drives the reference ensemble and every
    controlled system (which uses its first m columns), so X_i^m and Xbar_i
    see the same Brownian motion.  Returns m -> (1/m) sum_i sup-step squared
    gap, with the sup taken over every step.
    """
    if max(ms) > M_ref:
        raise ValueError("M_ref must dominate every system size")
    n_steps = int(round(T / dt))
    rng = stream(seed, replica)
    x_ref = np.full(M_ref, float(x0))
    w_ref = np.full(M_ref, 1.0 / M_ref)
    sys = {m: np.full(m, float(x0)) for m in ms}
    gap = {m: np.zeros(m) for m in ms}
    a_scale = {m: m ** (-theta) * math.sqrt(m) for m in ms}
    sqdt = math.sqrt(dt)
    for k in range(n_steps):
        t = k * dt
        z = rng.standard_normal(M_ref)
        mu_ref = MeasureHook(points=x_ref, weights=w_ref)
        ref_step = kernels.drift(x_ref, mu_ref) * dt + kernels.sigma(x_ref, mu_ref) * sqdt * z
        for m in ms:
            x = sys[m]
            mu = MeasureHook(points=x, weights=np.full(m, 1.0 / m))
            sig = kernels.sigma(x, mu)
            u = np.broadcast_to(np.asarray(control(t, x), dtype=float), x.shape)
            x = x + kernels.drift(x, mu) * dt + sig * sqdt * z[:m] + sig * u * (dt / a_scale[m])
            sys[m] = x
        x_ref = x_ref + ref_step
        for m in ms:
            np.maximum(gap[m], (sys[m] - x_ref[:m]) ** 2, out=gap[m])
    return {m: float(gap[m].mean()) for m in ms}
