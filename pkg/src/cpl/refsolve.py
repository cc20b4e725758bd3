"""Independent finite-difference reference solutions.

Method of lines with central stencils and ghost-cell reflection for the
Neumann boundaries, marched by classic RK4.  This module shares no numerical
code with the network pipeline beyond primitive arithmetic, so its solution
snapshots and invariant tables can serve as an oracle for error metrics.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass

import numpy as np

from .errors import CflViolation, ConfigError, DivergenceError
from .pde import PDEProblem

_BLOWUP = 1e6
_VERSION = 1


@dataclass
class ReferenceSolution:
    problem_name: str
    axes: list            # grid axis per spatial dimension
    ts: np.ndarray        # snapshot times
    snaps: np.ndarray     # (nt, nx) or (nt, nx, ny)
    c1: np.ndarray
    c2: np.ndarray
    dt: float
    c1_flux: np.ndarray = None  # time-integrated boundary outflux of c1, when tracked

    @property
    def grid_points(self):
        if len(self.axes) == 1:
            return self.axes[0][:, None]
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=1)


class InvariantTable:
    """Linear interpolation accessor over the reference c(t) tables."""

    def __init__(self, ts, c1, c2):
        self.ts = np.asarray(ts)
        self._c1 = np.asarray(c1)
        self._c2 = np.asarray(c2)

    def _interp(self, t, ys):
        if t < self.ts[0] - 1e-12 or t > self.ts[-1] + 1e-12:
            raise ValueError(f"t={t} outside the tabulated range "
                             f"[{self.ts[0]}, {self.ts[-1]}]")
        return float(np.interp(t, self.ts, ys))

    def c1(self, t):
        return self._interp(t, self._c1)

    def c2(self, t):
        return self._interp(t, self._c2)


def invariant_table(ref: ReferenceSolution) -> InvariantTable:
    return InvariantTable(ref.ts, ref.c1, ref.c2)


def cfl_limit(problem: PDEProblem, dx):
    """Stability bound on dt for the problem's stiffest term (with safety factor)."""
    c = problem.constants
    name = problem.name
    if name in ("advection1d", "advection2d"):
        return 0.4 * dx / abs(c["c"]) / (1 if name == "advection1d" else 2)
    if name == "reaction_diffusion1d":
        return min(0.2 * dx * dx / c["D"], 0.5 / c["k"])
    if name == "wave1d":
        return 0.4 * dx / abs(c["c"])
    if name == "kdv1d":
        return min(0.08 * dx ** 3 / c["b"], 0.4 * dx / (abs(c["a"]) * 1.5))
    raise ConfigError(f"no reference solver for problem {name!r}")


def suggest_dt(problem: PDEProblem, nx):
    dx = (problem.domain.upper[0] - problem.domain.lower[0]) / (nx - 1)
    return 0.9 * cfl_limit(problem, dx)


def _pad_reflect(u, width):
    if u.ndim == 1:
        return np.pad(u, width, mode="reflect")
    return np.pad(u, width, mode="reflect")


def _rhs_factory(problem: PDEProblem, dx):
    name = problem.name
    c = problem.constants

    if name == "advection1d":
        speed = c["c"]

        def rhs(u):
            p = _pad_reflect(u, 1)
            ux = (p[2:] - p[:-2]) / (2 * dx)
            return -speed * ux
        return rhs, False

    if name == "reaction_diffusion1d":
        D, k = c["D"], c["k"]

        def rhs(u):
            p = _pad_reflect(u, 1)
            uxx = (p[2:] - 2 * u + p[:-2]) / (dx * dx)
            return D * uxx + k * u
        return rhs, False

    if name == "wave1d":
        speed2 = c["c"] ** 2

        def rhs(state):
            u, v = state
            p = _pad_reflect(u, 1)
            uxx = (p[2:] - 2 * u + p[:-2]) / (dx * dx)
            return np.stack([v, speed2 * uxx])
        return rhs, True

    if name == "kdv1d":
        a, b = c["a"], c["b"]

        def rhs(u):
            p = _pad_reflect(u, 2)
            ux = (p[3:-1] - p[1:-3]) / (2 * dx)
            uxxx = (p[4:] - 2 * p[3:-1] + 2 * p[1:-3] - p[:-4]) / (2 * dx ** 3)
            return -a * u * ux - b * uxxx
        return rhs, False

    if name == "advection2d":
        speed = c["c"]

        def rhs(u):
            p = _pad_reflect(u, 1)
            ux = (p[2:, 1:-1] - p[:-2, 1:-1]) / (2 * dx)
            uy = (p[1:-1, 2:] - p[1:-1, :-2]) / (2 * dx)
            return -speed * (ux + uy)
        return rhs, False

    raise ConfigError(f"no reference solver for problem {name!r}")


def _trapz_weights(n, dx):
    w = np.full(n, dx)
    w[0] = w[-1] = dx / 2
    return w


def _boundary_flux_factory(problem: PDEProblem, dx):
    """Net boundary outflux d(c1)/dt = F(right) - F(left), where available.

    Lets the mass balance c1(t) = c1(0) - integral of the outflux be checked
    even when the physical flux through the walls is not negligible.
    """
    c = problem.constants
    if problem.name == "advection1d":
        speed = c["c"]

        def flux(u):
            return speed * (u[-1] - u[0])
        return flux
    return None


def solve_reference(problem: PDEProblem, nx, dt, n_snapshots=65,
                    cache_dir=None) -> ReferenceSolution:
    """March the problem to its final time, storing snapshots and invariant tables.

    dt must respect the CFL bound of the stiffest term; the solution is
    declared divergent if any value exceeds 1e6 in magnitude.
    """
    if cache_dir is not None:
        cached = _load_cache(problem, nx, dt, n_snapshots, cache_dir)
        if cached is not None:
            return cached

    d = problem.d
    if d > 2:
        raise ConfigError("reference solves support one or two spatial dimensions")
    lo, hi = problem.domain.lower[0], problem.domain.upper[0]
    dx = (hi - lo) / (nx - 1)
    limit = cfl_limit(problem, dx)
    if dt > limit:
        raise CflViolation(f"dt={dt:.3e} exceeds the stability bound {limit:.3e} "
                           f"for {problem.name} at nx={nx}")

    axes = [np.linspace(problem.domain.lower[i], problem.domain.upper[i], nx)
            for i in range(d)]
    if d == 1:
        X = axes[0][:, None]
        u = problem.u0(X)
        w = _trapz_weights(nx, dx)

        def integrals(u):
            return float(w @ u), float(w @ (u * u))
    else:
        mesh = np.meshgrid(*axes, indexing="ij")
        X = np.stack([m.reshape(-1) for m in mesh], axis=1)
        u = problem.u0(X).reshape(nx, nx)
        w1 = _trapz_weights(nx, dx)

        def integrals(u):
            return float(w1 @ u @ w1), float(w1 @ (u * u) @ w1)

    rhs, is_system = _rhs_factory(problem, dx)
    flux = _boundary_flux_factory(problem, dx) if d == 1 else None
    if is_system:
        v = problem.v0(X) if problem.v0 is not None else np.zeros_like(u)
        state = np.stack([u, v])
    else:
        state = u

    T = problem.t_final
    n_steps = int(np.ceil(T / dt))
    snap_steps = set(np.unique(np.round(np.linspace(0, n_steps, n_snapshots)).astype(int)))

    ts, snaps, c1s, c2s, fluxes = [], [], [], [], []
    flux_int = 0.0

    def record(step, state):
        uu = state[0] if is_system else state
        ts.append(min(step * dt, T))
        snaps.append(uu.copy())
        a, b = integrals(uu)
        c1s.append(a)
        c2s.append(b)
        fluxes.append(flux_int)

    record(0, state)
    for step in range(1, n_steps + 1):
        h = dt if step * dt <= T else T - (step - 1) * dt
        if flux is not None:
            f_prev = flux(state[0] if is_system else state)
        k1 = rhs(state)
        k2 = rhs(state + 0.5 * h * k1)
        k3 = rhs(state + 0.5 * h * k2)
        k4 = rhs(state + h * k3)
        state = state + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(state)) or np.max(np.abs(state)) > _BLOWUP:
            raise DivergenceError(f"{problem.name} reference blew up at step {step}")
        if flux is not None:
            f_new = flux(state[0] if is_system else state)
            flux_int += 0.5 * h * (f_prev + f_new)
        if step in snap_steps:
            record(step, state)

    ref = ReferenceSolution(problem_name=problem.name, axes=axes,
                            ts=np.asarray(ts), snaps=np.asarray(snaps),
                            c1=np.asarray(c1s), c2=np.asarray(c2s), dt=dt,
                            c1_flux=np.asarray(fluxes) if flux is not None else None)
    if cache_dir is not None:
        _save_cache(ref, problem, nx, dt, n_snapshots, cache_dir)
    return ref


def _cache_key(problem, nx, dt, n_snapshots):
    consts = ",".join(f"{k}={v}" for k, v in sorted(problem.constants.items()))
    key = f"v{_VERSION}:{problem.name}:{problem.d}:{nx}:{dt:.6e}:{problem.t_final}:" \
          f"{n_snapshots}:{consts}"
    return hashlib.sha256(key.encode()).hexdigest()[:16]


def _cache_path(problem, nx, dt, n_snapshots, cache_dir):
    return os.path.join(cache_dir, f"ref_{problem.name}_{nx}_"
                                   f"{_cache_key(problem, nx, dt, n_snapshots)}.npz")


def _load_cache(problem, nx, dt, n_snapshots, cache_dir):
    path = _cache_path(problem, nx, dt, n_snapshots, cache_dir)
    if not os.path.exists(path):
        return None
    data = np.load(path, allow_pickle=False)
    if str(data["key"]) != _cache_key(problem, nx, dt, n_snapshots):
        return None
    axes = [data[f"axis{i}"] for i in range(problem.d)]
    return ReferenceSolution(problem_name=problem.name, axes=axes, ts=data["ts"],
                             snaps=data["snaps"], c1=data["c1"], c2=data["c2"],
                             dt=float(data["dt"]),
                             c1_flux=data["c1_flux"] if "c1_flux" in data else None)


def _save_cache(ref, problem, nx, dt, n_snapshots, cache_dir):
    os.makedirs(cache_dir, exist_ok=True)
    path = _cache_path(problem, nx, dt, n_snapshots, cache_dir)
    payload = {"key": _cache_key(problem, nx, dt, n_snapshots), "ts": ref.ts,
               "snaps": ref.snaps, "c1": ref.c1, "c2": ref.c2, "dt": ref.dt}
    if ref.c1_flux is not None:
        payload["c1_flux"] = ref.c1_flux
    for i, ax in enumerate(ref.axes):
        payload[f"axis{i}"] = ax
    np.savez(path, **payload)
