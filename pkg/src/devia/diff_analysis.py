"""Grid solvers for the diffusion model's deterministic limit objects.

``solve_fokker_planck`` marches the nonlinear McKean-Vlasov density: at every
step the drift and diffusion fields are recomputed from the current density
by quadrature, then a conservative finite-volume update is applied (limited
upwind advection, central diffusion, explicit Euler in time under a CFL
check).  Mass is conserved to round-off by construction.

``solve_linearized`` marches the mass-zero signed density eta driven by a
control g through the forcing flux sigma * g * rho, plus the two nonlocal
terms that realize the adjoint of the fluctuation generator:

    d_t eta = -d_x[b eta] + 1/2 d_xx[sigma^2 eta]
              - d_x[c_eta rho] + d_xx[sigma d_eta rho] - d_x[sigma g rho],

with c_eta(y) = integral beta(y, x) eta(x) dx and d_eta(y) likewise with
alpha.

``rate_diffusion`` inverts a path eta: the same discrete operator gives the
non-forcing tendency, the leftover residual is integrated in x to recover
the forcing flux sigma*g*rho at the cell interfaces (it must vanish at both
ends, otherwise the path leaks mass), and the cost is 1/2 * integral g^2 rho
evaluated as flux^2 / (sigma^2 rho) away from the degeneracy floor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .jump_analysis import RateResult
from .kernels import KernelPair, MeasureHook

__all__ = [
    "GridField",
    "solve_fokker_planck",
    "solve_linearized",
    "rate_diffusion",
    "control_cost_on_grid",
    "weak_form_residual",
    "stable_dt",
]

EPS_DEG_FACTOR = 1e-8
LEAK_RTOL = 1e-6


@dataclass(frozen=True)
class GridField:
    """Field values on a uniform space-time grid; values[k, i] at (ts[k], xs[i])."""

    xs: np.ndarray  # (Nx,) cell centers
    ts: np.ndarray  # (Nt+1,) times
    values: np.ndarray  # (Nt+1, Nx)

    @property
    def dx(self) -> float:
        return float(self.xs[1] - self.xs[0])

    @property
    def dt(self) -> float:
        return float(self.ts[1] - self.ts[0])

    def mass(self) -> np.ndarray:
        """Integral over x at each time."""
        return self.values.sum(axis=1) * self.dx

    def index_of(self, t: float) -> int:
        k = int(round((t - self.ts[0]) / self.dt))
        if not (0 <= k < len(self.ts)) or abs(self.ts[k] - t) > 1e-9 * max(1.0, self.ts[-1]):
            raise ValueError(f"time {t} is not on the grid")
        return k

    def hook(self, t: float) -> MeasureHook:
        return MeasureHook(points=self.xs, weights=self.values[self.index_of(t)] * self.dx)

    def pair(self, t: float, f: Callable[[np.ndarray], np.ndarray]) -> float:
        return self.hook(t).pair(f)


def _coeff_fields(kernels: KernelPair, xs: np.ndarray, rho: np.ndarray, dx: float):
    mu = MeasureHook(points=xs, weights=rho * dx)
    return kernels.sigma(xs, mu), kernels.drift(xs, mu)


def _vanleer(r: np.ndarray) -> np.ndarray:
    return (r + np.abs(r)) / (1.0 + np.abs(r))


def _advective_flux(v: np.ndarray, f: np.ndarray, dx: float) -> np.ndarray:
    """Flux-limited upwind flux of the field f with cell-center velocity v,
    at the interior interfaces (length Nx-1)."""
    vf = 0.5 * (v[:-1] + v[1:])
    df = np.diff(f)  # f_{i+1} - f_i, length Nx-1
    # limited slope ratios on the donor side; guard zero denominators
    eps = 1e-300
    r_up = np.ones_like(df)
    r_dn = np.ones_like(df)
    r_up[1:] = df[:-1] / (df[1:] + np.where(df[1:] >= 0, eps, -eps))
    r_dn[:-1] = df[1:] / (df[:-1] + np.where(df[:-1] >= 0, eps, -eps))
    face_up = f[:-1] + 0.5 * _vanleer(r_up) * df  # donor cell on the left
    face_dn = f[1:] - 0.5 * _vanleer(r_dn) * df  # donor cell on the right
    face = np.where(vf >= 0.0, face_up, face_dn)
    return vf * face


def _gradient_flux(p: np.ndarray, dx: float) -> np.ndarray:
    """Interface values of d_x p by central differencing: (p_{i+1}-p_i)/dx."""
    return np.diff(p) / dx


def _central_face(p: np.ndarray) -> np.ndarray:
    return 0.5 * (p[:-1] + p[1:])


def _divergence(flux: np.ndarray, dx: float) -> np.ndarray:
    """Cell tendency -d_x F from interior interface fluxes, zero-flux walls."""
    out = np.empty(len(flux) + 1)
    out[0] = -flux[0] / dx
    out[-1] = flux[-1] / dx
    out[1:-1] = -(flux[1:] - flux[:-1]) / dx
    return out


def _fp_tendency(kernels, xs, rho, dx):
    sigma, b = _coeff_fields(kernels, xs, rho, dx)
    flux = _advective_flux(b, rho, dx) - _gradient_flux(0.5 * sigma**2 * rho, dx)
    return _divergence(flux, dx), sigma, b


def stable_dt(kernels: KernelPair, xs: np.ndarray, safety: float = 0.45) -> float:
    """Step size satisfying the diffusion and advection CFL limits for
    coefficient bounds scanned over the grid box."""
    grid = np.asarray(xs, dtype=float)
    a_max = float(np.abs(kernels.alpha(grid[:, None], grid[None, :])).max())
    b_max = float(np.abs(kernels.beta(grid[:, None], grid[None, :])).max())
    dx = float(grid[1] - grid[0])
    lim = dx * dx / max(a_max**2, 1e-12)
    if b_max > 0:
        lim = min(lim, dx / b_max)
    return safety * lim


def solve_fokker_planck(
    kernels: KernelPair,
    x0: float,
    T: float,
    x_lo: float,
    x_hi: float,
    nx: int,
    dt: float | None = None,
    w0: float | None = None,
    boundary_tol: float = 1e-10,
) -> GridField:
    """Self-consistent density of the limit law, from a mollified point mass.

    The initial condition is a Gaussian bump of width ``w0`` (default 4 dx)
    at x0, discretely normalized.  Raises if mass reaches the boundary cells
    (the grid must cover the dynamic range) or the CFL condition fails.
    """
    xs = np.linspace(x_lo, x_hi, nx)
    dx = float(xs[1] - xs[0])
    if w0 is None:
        w0 = 4.0 * dx
    if dt is None:
        dt = stable_dt(kernels, xs)
    n_steps = max(1, int(math.ceil(T / dt - 1e-12)))
    dt = T / n_steps
    rho = np.exp(-((xs - x0) ** 2) / (2.0 * w0 * w0))
    rho /= rho.sum() * dx
    out = np.empty((n_steps + 1, nx))
    out[0] = rho
    for k in range(n_steps):
        tendency, sigma, b = _fp_tendency(kernels, xs, rho, dx)
        _check_cfl(dt, dx, sigma, b)
        rho = rho + dt * tendency
        if abs(rho[0]) > boundary_tol or abs(rho[-1]) > boundary_tol:
            raise RuntimeError(
                f"density reached the grid boundary at t={k * dt + dt:.6g}; widen [x_lo, x_hi]"
            )
        out[k + 1] = rho
    return GridField(xs, np.linspace(0.0, T, n_steps + 1), out)


def _check_cfl(dt: float, dx: float, sigma: np.ndarray, b: np.ndarray) -> None:
    smax = float(np.max(sigma**2))
    bmax = float(np.max(np.abs(b)))
    if smax > 0 and dt > dx * dx / smax + 1e-15:
        raise RuntimeError(f"CFL violation: dt={dt:.3e} > dx^2/max(sigma^2)={dx * dx / smax:.3e}")
    if bmax > 0 and dt > dx / bmax + 1e-15:
        raise RuntimeError(f"advective CFL violation: dt={dt:.3e} > dx/max|b|={dx / bmax:.3e}")


def _as_control_array(g, xs: np.ndarray, ts: np.ndarray) -> np.ndarray:
    """Control g on the (time, space) grid from a callable or array."""
    if callable(g):
        return np.stack([np.broadcast_to(np.asarray(g(xs, t), dtype=float), xs.shape) for t in ts])
    g = np.asarray(g, dtype=float)
    if g.shape == (len(ts), len(xs)):
        return g
    if g.shape == (len(ts) - 1, len(xs)):  # per-step values; repeat the last
        return np.vstack([g, g[-1:]])
    raise ValueError("control grid must match the density grid")


def _linearized_tendency(kernels, xs, dx, rho_k, eta, g_k, sigma, b):
    mu_eta = MeasureHook(points=xs, weights=eta * dx)
    c_eta = kernels.beta.mean_y(xs, mu_eta)
    d_eta = kernels.alpha.mean_y(xs, mu_eta)
    flux = (
        _advective_flux(b, eta, dx)
        + _central_face(c_eta * rho_k)
        - _gradient_flux(0.5 * sigma**2 * eta, dx)
        - _gradient_flux(sigma * d_eta * rho_k, dx)
    )
    if g_k is not None:
        flux = flux + _central_face(sigma * g_k * rho_k)
    return _divergence(flux, dx)


def solve_linearized(kernels: KernelPair, rho: GridField, g) -> GridField:
    """March the linearized forced equation from eta(0) = 0 along the times
    of the density field.  Linear in g; conserves the zero mass of eta to
    round-off (every term is a flux divergence)."""
    xs, ts, dx, dt = rho.xs, rho.ts, rho.dx, rho.dt
    garr = _as_control_array(g, xs, ts)
    eta = np.zeros(len(xs))
    out = np.empty_like(rho.values)
    out[0] = eta
    for k in range(len(ts) - 1):
        sigma, b = _coeff_fields(kernels, xs, rho.values[k], dx)
        eta = eta + dt * _linearized_tendency(
            kernels, xs, dx, rho.values[k], eta, garr[k], sigma, b
        )
        out[k + 1] = eta
    return GridField(xs, ts, out)


def control_cost_on_grid(rho: GridField, g) -> float:
    """1/2 * integral g^2 rho dx dt (trapezoid in t)."""
    garr = _as_control_array(g, rho.xs, rho.ts)
    dens = (garr**2 * rho.values).sum(axis=1) * rho.dx
    return 0.5 * float(np.trapezoid(dens, rho.ts))


def rate_diffusion(
    kernels: KernelPair,
    rho: GridField,
    eta: GridField,
    eps_deg_factor: float = EPS_DEG_FACTOR,
    leak_rtol: float = LEAK_RTOL,
) -> RateResult:
    """Least-cost control reproducing eta: recovers the forcing flux from the
    PDE residual and returns 1/2 * integral g^2 rho, or infeasible when the
    recovered flux leaks at the boundary, lives on degenerate cells, or eta
    fails the mass-zero / zero-start contract."""
    xs, ts, dx, dt = eta.xs, eta.ts, eta.dx, eta.dt
    if not (np.array_equal(xs, rho.xs) and np.array_equal(ts, rho.ts)):
        raise ValueError("eta and rho must share the grid")
    vals = eta.values
    scale = max(1.0, float(np.abs(vals).max()))
    if np.abs(vals[0]).max() > 1e-8 * scale:
        return RateResult(math.inf, False, np.zeros(0), "path does not start at zero")
    mass = np.abs(vals.sum(axis=1) * dx)
    if mass.max() > 1e-8 * scale:
        return RateResult(math.inf, False, mass, "path is not mass-zero")

    n_t = len(ts)
    etadot = np.empty_like(vals)
    etadot[1:-1] = (vals[2:] - vals[:-2]) / (2.0 * dt)
    etadot[0] = (-3.0 * vals[0] + 4.0 * vals[1] - vals[2]) / (2.0 * dt)
    etadot[-1] = (3.0 * vals[-1] - 4.0 * vals[-2] + vals[-3]) / (2.0 * dt)

    dens_t = np.zeros(n_t)
    leak = np.zeros(n_t)
    degenerate_flux = 0.0
    max_flux = 0.0
    fluxes = []
    faces_deg = []
    for k in range(n_t):
        sigma, b = _coeff_fields(kernels, xs, rho.values[k], dx)
        nonforcing = _linearized_tendency(
            kernels, xs, dx, rho.values[k], vals[k], None, sigma, b
        )
        resid = etadot[k] - nonforcing
        # resid = -d_x Phi with zero-flux walls: integrate from the left
        phi = -np.cumsum(resid[:-1]) * dx
        leak[k] = abs(dx * resid.sum())
        s2r_face = _central_face(sigma**2 * rho.values[k])
        fluxes.append(phi)
        faces_deg.append(s2r_face)
        max_flux = max(max_flux, float(np.abs(phi).max(initial=0.0)))

    floor = eps_deg_factor * max(
        float(np.max([f.max(initial=0.0) for f in faces_deg])), 1e-300
    )
    flux_tol = leak_rtol * max(1.0, max_flux)
    if leak.max() > flux_tol:
        k = int(leak.argmax())
        return RateResult(
            math.inf,
            False,
            leak / max(1.0, max_flux),
            f"forcing flux does not vanish at the boundary at t={ts[k]:.6g} "
            f"(leak {leak[k]:.3e})",
        )
    for k in range(n_t):
        ok = faces_deg[k] > floor
        if np.any(~ok & (np.abs(fluxes[k]) > flux_tol)):
            return RateResult(
                math.inf,
                False,
                leak / max(1.0, max_flux),
                f"recovered flux lives where sigma^2 rho is degenerate at t={ts[k]:.6g}",
            )
        dens_t[k] = float((fluxes[k][ok] ** 2 / faces_deg[k][ok]).sum()) * dx
    value = 0.5 * float(np.trapezoid(dens_t, ts))
    return RateResult(value, True, leak / max(1.0, max_flux))


def weak_form_residual(
    kernels: KernelPair, rho: GridField, eta: GridField, g, phi
) -> np.ndarray:
    """Pointwise-in-time residual of the weak form

        d/dt <eta, phi> - <eta, L(t) phi> - <sigma g rho, phi'>,

    with the generator applied through the density's measure hook.  The
    residual should shrink under grid refinement; it is the duality check
    between the marched adjoint equation and the test-function calculus.
    """
    from .schwartz import apply_L

    xs, ts, dx, dt = eta.xs, eta.ts, eta.dx, eta.dt
    garr = _as_control_array(g, xs, ts)
    phi_x = phi(xs)
    dphi_x = phi.derivative()(xs)
    pair_eta = eta.values @ phi_x * dx
    dpair = np.gradient(pair_eta, dt)
    out = np.empty(len(ts))
    for k in range(len(ts)):
        mu = rho.hook(ts[k])
        L_phi = apply_L(kernels, mu, phi)
        sigma = kernels.sigma(xs, mu)
        bracket = float(eta.values[k] @ L_phi(xs) * dx)
        forcing = float((sigma * garr[k] * rho.values[k]) @ dphi_x * dx)
        out[k] = dpair[k] - bracket - forcing
    return out
