"""Time integration of Schrodinger and Lindblad dynamics.

Exact protocol simulations run in the interaction picture of the bare
qubit+cavity Hamiltonian with counter-rotating terms retained (RabiApplier),
so the fastest surviving frequency is w_c + w_q.  Appliers implement H(t)
matrix-free as structured shifts on a (qubit_levels, cavity_cutoff, ...) grid;
the trailing dimensions let the same code left-multiply density matrices.

The adaptive path is an embedded Runge-Kutta 5(4) pair (scipy's RK45) with a
max_step that resolves the fastest retained frequency; a fixed-step RK4 is
kept as an independent cross-check.  Same inputs and config give bit-identical
trajectories on one platform.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.integrate import solve_ivp

from .hilbert import DensityState, HilbertDims, JointState, TruncationError
from .models import (
    PulseSchedule,
    SystemParams,
    coupling_op_qubit,
    qubit_energies,
)
from .units import TWO_PI


class IntegrationError(RuntimeError):
    """Integration failed or drifted past its error budget."""


@dataclass(frozen=True)
class IntegratorConfig:
    """Integration controls.

    max_step None means auto: 1/(20 (w_c + w_q)/2pi) ns, twenty steps per
    period of the fastest retained frequency.  norm_check_interval None checks
    every sample time.  samples fixes the output grid (endpoints included).
    """

    method: str = "adaptive_rk"
    rel_tol: float = 1e-9
    abs_tol: float = 1e-11
    max_step: Optional[float] = None
    norm_check_interval: Optional[float] = None
    leak_tol: float = 1e-6
    samples: int = 201

    def __post_init__(self):
        if self.method not in ("adaptive_rk", "fixed_rk4"):
            raise ValueError(f"unknown integrator method {self.method!r}")
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise ValueError("tolerances must be > 0")
        if self.samples < 2:
            raise ValueError("need at least 2 sample times")


@dataclass
class Trajectory:
    """Sampled evolution: times (ns), stored states, derived observables."""

    times: np.ndarray
    states: list
    kind: str  # "pure" | "density" | "moments"
    observables: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    @property
    def final(self):
        return self.states[-1]


# ---------------------------------------------------------------------------
# scalar envelope/drive evaluation (hot path, math.erfc)

def _env_scalar(schedule: PulseSchedule, g_max: float, t: float) -> float:
    env = schedule.envelope
    if env.kind == "erfc":
        return (
            0.25
            * g_max
            * math.erfc(-env.v1 * (t - env.t1))
            * math.erfc(env.v1 * (t - env.t2))
        )
    if env.kind == "square":
        return g_max if env.t1 <= t <= env.t2 else 0.0
    return g_max


def _drive_scalar(schedule: PulseSchedule, t: float) -> float:
    amp = 0.0
    if schedule.drive is not None:
        d = schedule.drive
        amp += d.g_d * math.exp(-((t - d.t1) ** 2) / (2.0 * d.sigma**2))
    if schedule.sustain is not None:
        s = schedule.sustain
        if s.t_a <= t <= s.t_b:
            amp += s.amplitude
    return amp


# ---------------------------------------------------------------------------
# matrix-free H(t) appliers

class _ApplierBase:
    """Shared ladder shifts; subclasses define hpsi(t, grid) -> H(t) grid."""

    def __init__(self, params: SystemParams, schedule: PulseSchedule):
        self.params = params
        self.schedule = schedule
        n = params.dims.cavity_cutoff
        self.k = params.dims.qubit_levels
        self.n = n
        self._sq = np.sqrt(np.arange(1.0, n))

    def _sqv(self, ndim):
        # broadcast sqrt factors along the cavity axis (axis 1)
        return self._sq.reshape((1, self.n - 1) + (1,) * (ndim - 2))

    def _down(self, grid):
        # (I x a) psi : out[.., m, ..] = sqrt(m+1) psi[.., m+1, ..]
        out = np.zeros_like(grid)
        out[:, :-1] = grid[:, 1:] * self._sqv(grid.ndim)
        return out

    def _up(self, grid):
        # (I x a+) psi : out[.., m, ..] = sqrt(m) psi[.., m-1, ..]
        out = np.zeros_like(grid)
        out[:, 1:] = grid[:, :-1] * self._sqv(grid.ndim)
        return out


class RabiApplier(_ApplierBase):
    """Interaction picture of the full transverse coupling (all terms kept)."""

    model_name = "rabi"

    def __init__(self, params, schedule):
        super().__init__(params, schedule)
        self._e_q = qubit_energies(params)
        self._b = coupling_op_qubit(params).astype(complex)

    def hpsi(self, t, grid):
        p = self.params
        g = _env_scalar(self.schedule, p.g_max, t)
        om = _drive_scalar(self.schedule, t)
        down = self._down(grid)
        up = self._up(grid)
        if g != 0.0:
            ph_q = np.exp(1j * self._e_q * t)
            b_t = (ph_q[:, None] * self._b) * np.conj(ph_q)[None, :]
            ph_c = np.exp(-1j * p.omega_c * t)
            x = ph_c * down + np.conj(ph_c) * up
            out = g * np.einsum("ij,j...->i...", b_t, x)
        else:
            out = np.zeros_like(grid)
        if om != 0.0:
            out += om * (down + up)
        return out


class RWAApplier(_ApplierBase):
    """Excitation-conserving part only (ideal qubit)."""

    model_name = "rwa"

    def __init__(self, params, schedule):
        if params.qubit_model != "ideal":
            raise ValueError("RWA applier is for the ideal qubit")
        super().__init__(params, schedule)

    def hpsi(self, t, grid):
        p = self.params
        g = _env_scalar(self.schedule, p.g_max, t)
        om = _drive_scalar(self.schedule, t)
        down = self._down(grid)
        up = self._up(grid)
        out = np.zeros_like(grid)
        if g != 0.0:
            ph = np.exp(1j * p.delta * t)
            # sigma+ (x) a e^{i Delta t}: row 1 takes row 0 of (a psi)
            out[1] += g * ph * down[0]
            out[0] += g * np.conj(ph) * up[1]
        if om != 0.0:
            out += om * (down + up)
        return out


class DispersiveApplier(_ApplierBase):
    """(g(t)^2/Delta) sigma_z a+a in the interaction picture (ideal qubit)."""

    model_name = "dispersive"

    def __init__(self, params, schedule):
        if params.qubit_model != "ideal":
            raise ValueError("dispersive applier is for the ideal qubit")
        if params.delta == 0.0:
            raise ValueError("dispersive model is singular at zero detuning")
        super().__init__(params, schedule)
        nvec = np.arange(self.n, dtype=float)
        self._szn = np.array([-1.0, 1.0])[:, None] * nvec[None, :]

    def hpsi(self, t, grid):
        p = self.params
        g = _env_scalar(self.schedule, p.g_max, t)
        om = _drive_scalar(self.schedule, t)
        chi = g * g / p.delta
        diag = chi * self._szn
        out = diag.reshape(diag.shape + (1,) * (grid.ndim - 2)) * grid
        if om != 0.0:
            out += om * (self._down(grid) + self._up(grid))
        return out


class LabApplier(_ApplierBase):
    """Lab frame with explicit carrier on the drive; for frame cross-checks."""

    model_name = "lab"

    def __init__(self, params, schedule):
        super().__init__(params, schedule)
        self._e_q = qubit_energies(params)
        self._b = coupling_op_qubit(params).astype(complex)
        nvec = np.arange(self.n, dtype=float)
        self._diag = self._e_q[:, None] + params.omega_c * nvec[None, :]

    def hpsi(self, t, grid):
        p = self.params
        g = _env_scalar(self.schedule, p.g_max, t)
        om = _drive_scalar(self.schedule, t)
        out = self._diag.reshape(self._diag.shape + (1,) * (grid.ndim - 2)) * grid
        down = self._down(grid)
        up = self._up(grid)
        if g != 0.0:
            x = down + up
            out += g * np.einsum("ij,j...->i...", self._b, x)
        if om != 0.0:
            ph = np.exp(1j * p.omega_c * t)
            out += om * (ph * down + np.conj(ph) * up)
        return out


class DenseApplier:
    """Adapter for a plain t -> dense-matrix callable."""

    model_name = "dense"

    def __init__(self, builder, dims: HilbertDims, params=None):
        self.builder = builder
        self.dims = dims
        self.params = params
        self.k = dims.qubit_levels
        self.n = dims.cavity_cutoff

    def hpsi(self, t, grid):
        h = self.builder(t)
        flat = grid.reshape(self.k * self.n, -1)
        out = h @ flat
        return out.reshape(grid.shape)


_APPLIERS = {
    "rabi": RabiApplier,
    "rwa": RWAApplier,
    "dispersive": DispersiveApplier,
    "lab": LabApplier,
}


def make_applier(model: str, params: SystemParams, schedule: PulseSchedule):
    try:
        cls = _APPLIERS[model]
    except KeyError:
        raise ValueError(f"unknown dynamical model {model!r}") from None
    return cls(params, schedule)


# ---------------------------------------------------------------------------
# integration drivers

def default_max_step(params: SystemParams) -> float:
    """Twenty steps per period of the fastest retained frequency w_c + w_q."""
    f_fast = (params.omega_c + params.omega_q) / TWO_PI
    return 1.0 / (20.0 * f_fast)


def _resolve_applier(hamiltonian, initial):
    if hasattr(hamiltonian, "hpsi"):
        return hamiltonian
    return DenseApplier(hamiltonian, initial.dims)


def _resolve_max_step(cfg, applier, span):
    if cfg.max_step is not None:
        h = cfg.max_step
        p = getattr(applier, "params", None)
        if p is not None:
            bound = default_max_step(p)
            if h > bound * (1 + 1e-12):
                raise ValueError(
                    f"max_step {h:g} ns does not resolve the fastest retained "
                    f"frequency (bound {bound:g} ns)"
                )
        return h
    p = getattr(applier, "params", None)
    if p is not None:
        return default_max_step(p)
    return (span[1] - span[0]) / 1000.0


def _run_ode(rhs, y0, t_eval, cfg, h_max):
    """Integrate rhs over t_eval; returns (states at t_eval, nfev)."""
    nfev = 0

    def counted(t, y):
        nonlocal nfev
        nfev += 1
        return rhs(t, y)

    if cfg.method == "adaptive_rk":
        sol = solve_ivp(
            counted,
            (t_eval[0], t_eval[-1]),
            y0,
            method="RK45",
            t_eval=t_eval,
            rtol=cfg.rel_tol,
            atol=cfg.abs_tol,
            max_step=h_max,
        )
        if not sol.success:
            raise IntegrationError(f"adaptive integration failed: {sol.message}")
        return [sol.y[:, i].copy() for i in range(sol.y.shape[1])], nfev
    # fixed RK4 at step <= h_max, landing exactly on each sample time
    ys = [y0.copy()]
    y = y0.copy()
    for i in range(len(t_eval) - 1):
        ta, tb = t_eval[i], t_eval[i + 1]
        nst = max(1, int(math.ceil((tb - ta) / h_max - 1e-12)))
        dt = (tb - ta) / nst
        for j in range(nst):
            t = ta + j * dt
            k1 = counted(t, y)
            k2 = counted(t + 0.5 * dt, y + (0.5 * dt) * k1)
            k3 = counted(t + 0.5 * dt, y + (0.5 * dt) * k2)
            k4 = counted(t + dt, y + dt * k3)
            y = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        ys.append(y.copy())
    return ys, nfev


def _check_times(cfg, t_eval):
    """Sample indices at which norm/trace/leakage checks run."""
    if cfg.norm_check_interval is None:
        return range(len(t_eval))
    idx = [0]
    last = t_eval[0]
    for i, t in enumerate(t_eval):
        if t - last >= cfg.norm_check_interval - 1e-12:
            idx.append(i)
            last = t
    if idx[-1] != len(t_eval) - 1:
        idx.append(len(t_eval) - 1)
    return idx


def evolve_schrodinger(
    initial: JointState,
    hamiltonian,
    span,
    cfg: Optional[IntegratorConfig] = None,
) -> Trajectory:
    """Evolve a pure joint state under a time-dependent Hamiltonian.

    hamiltonian is either an applier from make_applier() or a callable
    t -> dense matrix (Hermitian at all t).  States are sampled on a uniform
    grid of cfg.samples points; norm drift beyond 1e-6 or Fock-truncation
    leakage raises instead of silently continuing.
    """
    cfg = cfg or IntegratorConfig()
    applier = _resolve_applier(hamiltonian, initial)
    t0, t1 = float(span[0]), float(span[1])
    if not t1 > t0:
        raise ValueError("span must satisfy t1 > t0")
    h_max = _resolve_max_step(cfg, applier, (t0, t1))
    dims = initial.dims
    k, n = dims.qubit_levels, dims.cavity_cutoff

    def rhs(t, y):
        return (-1j * applier.hpsi(t, y.reshape(k, n))).ravel()

    wall = time.perf_counter()
    ys, nfev = _run_ode(rhs, initial.amplitudes.astype(complex), np.linspace(t0, t1, cfg.samples), cfg, h_max)
    wall = time.perf_counter() - wall

    t_eval = np.linspace(t0, t1, cfg.samples)
    states = [JointState(y, dims, time=t) for y, t in zip(ys, t_eval)]
    max_drift = 0.0
    for i in _check_times(cfg, t_eval):
        st = states[i]
        drift = abs(st.norm() - 1.0)
        max_drift = max(max_drift, drift)
        if drift > 1e-6:
            raise IntegrationError(
                f"norm drift {drift:.2e} at t={st.time:g} ns exceeds 1e-6"
            )
        st.require_in_truncation(cfg.leak_tol)
    return Trajectory(
        times=t_eval,
        states=states,
        kind="pure",
        meta={
            "nfev": nfev,
            "method": cfg.method,
            "model": getattr(applier, "model_name", "dense"),
            "wall_s": wall,
            "max_norm_drift": max_drift,
        },
    )


def evolve_lindblad(
    initial: DensityState,
    hamiltonian,
    collapse_rates,
    span,
    cfg: Optional[IntegratorConfig] = None,
) -> Trajectory:
    """Evolve a density matrix with cavity photon loss.

    collapse_rates is a list of (role, rate) pairs; the only supported role
    is "cavity_annihilation".  The dissipator is the standard Schrodinger-
    picture form kappa (a rho a+ - {a+a, rho}/2), trace- and Hermiticity-
    preserving.
    """
    cfg = cfg or IntegratorConfig()
    applier = _resolve_applier(hamiltonian, initial)
    t0, t1 = float(span[0]), float(span[1])
    h_max = _resolve_max_step(cfg, applier, (t0, t1))
    dims = initial.dims
    k, n = dims.qubit_levels, dims.cavity_cutoff
    kappa = 0.0
    for role, rate in collapse_rates:
        if role != "cavity_annihilation":
            raise ValueError(f"unsupported collapse operator role {role!r}")
        if rate < 0:
            raise ValueError("collapse rates must be >= 0")
        kappa += rate
    sq = np.sqrt(np.arange(1.0, n))
    nvec = np.arange(n, dtype=float)
    nsum = nvec[None, :, None, None] + nvec[None, None, None, :]

    def rhs(t, y):
        rho = y.reshape(k, n, k, n)
        hrho = applier.hpsi(t, rho.reshape(k, n, k * n)).reshape(k, n, k, n)
        rho_dag = np.conj(np.transpose(rho, (2, 3, 0, 1)))
        hrho_dag = applier.hpsi(t, rho_dag.reshape(k, n, k * n)).reshape(k, n, k, n)
        rho_h = np.conj(np.transpose(hrho_dag, (2, 3, 0, 1)))
        out = -1j * (hrho - rho_h)
        if kappa != 0.0:
            # a rho a+: down-shift the row cavity index and the column cavity index
            ara = np.zeros_like(rho)
            ara[:, :-1, :, :-1] = (
                rho[:, 1:, :, 1:] * sq[None, :, None, None] * sq[None, None, None, :]
            )
            out += kappa * (ara - 0.5 * nsum * rho)
        return out.ravel()

    wall = time.perf_counter()
    t_eval = np.linspace(t0, t1, cfg.samples)
    ys, nfev = _run_ode(rhs, initial.matrix.astype(complex).ravel(), t_eval, cfg, h_max)
    wall = time.perf_counter() - wall

    states = [DensityState(y.reshape(k * n, k * n), dims, time=t) for y, t in zip(ys, t_eval)]
    max_drift = 0.0
    for i in _check_times(cfg, t_eval):
        st = states[i]
        m = st.matrix
        drift = abs(np.trace(m).real - 1.0)
        max_drift = max(max_drift, drift)
        if drift > 1e-6:
            raise IntegrationError(f"trace drift {drift:.2e} at t={st.time:g} ns")
        if np.max(np.abs(m - m.conj().T)) > 1e-10 * max(1.0, float(np.max(np.abs(m)))):
            raise IntegrationError(f"Hermiticity loss at t={st.time:g} ns")
    return Trajectory(
        times=t_eval,
        states=states,
        kind="density",
        meta={
            "nfev": nfev,
            "method": cfg.method,
            "model": getattr(applier, "model_name", "dense"),
            "wall_s": wall,
            "max_trace_drift": max_drift,
        },
    )


# ---------------------------------------------------------------------------
# observables

def _pure_observable(state: JointState, name: str):
    g = state.grid()
    k, n = g.shape
    if name == "norm":
        return state.norm()
    if name == "sigma_z":
        if k != 2:
            raise ValueError("sigma_z requires a 2-level qubit")
        pops = np.sum(np.abs(g) ** 2, axis=1)
        return float(pops[1] - pops[0])
    if name.startswith("P") and name[1:].isdigit():
        j = int(name[1:])
        if j >= k:
            raise ValueError(f"population {name} out of range for {k} levels")
        return float(np.sum(np.abs(g[j]) ** 2))
    if name == "a":
        sq = np.sqrt(np.arange(1.0, n))
        return complex(np.sum(np.conj(g[:, :-1]) * g[:, 1:] * sq[None, :]))
    if name == "n":
        nvec = np.arange(n, dtype=float)
        return float(np.sum(np.abs(g) ** 2 * nvec[None, :]))
    if name == "a2":
        sq2 = np.sqrt(np.arange(1.0, n - 1) * np.arange(2.0, n))
        return complex(np.sum(np.conj(g[:, :-2]) * g[:, 2:] * sq2[None, :]))
    raise ValueError(f"unknown observable {name!r}")


def _density_observable(state: DensityState, name: str):
    k, n = state.dims.qubit_levels, state.dims.cavity_cutoff
    rho = state.matrix.reshape(k, n, k, n)
    if name == "norm":
        return float(np.trace(state.matrix).real)
    if name == "sigma_z":
        if k != 2:
            raise ValueError("sigma_z requires a 2-level qubit")
        rq = np.einsum("injn->ij", rho)
        return float((rq[1, 1] - rq[0, 0]).real)
    if name.startswith("P") and name[1:].isdigit():
        j = int(name[1:])
        rq = np.einsum("injn->ij", rho)
        return float(rq[j, j].real)
    rc = np.einsum("inim->nm", rho)
    if name == "a":
        sq = np.sqrt(np.arange(1.0, n))
        return complex(np.sum(np.diagonal(rc, offset=-1) * sq))
    if name == "n":
        return float(np.sum(np.diagonal(rc).real * np.arange(n)))
    if name == "a2":
        sq2 = np.sqrt(np.arange(1.0, n - 1) * np.arange(2.0, n))
        return complex(np.sum(np.diagonal(rc, offset=-2) * sq2))
    raise ValueError(f"unknown observable {name!r}")


def observables_series(traj: Trajectory, which) -> dict:
    """Compute named observable time series from stored states.

    Names: sigma_z, P0..P{k-1}, a, n, a2, norm.  <a> is reported in whatever
    frame the trajectory was integrated in; protocol runs use the interaction
    picture, so <a> is already the rotating-frame centroid.
    """
    out = {}
    for name in which:
        if traj.kind == "pure":
            vals = [_pure_observable(s, name) for s in traj.states]
        elif traj.kind == "density":
            vals = [_density_observable(s, name) for s in traj.states]
        else:
            raise ValueError("observables_series expects a state trajectory")
        out[name] = np.array(vals)
    traj.observables.update(out)
    return out
