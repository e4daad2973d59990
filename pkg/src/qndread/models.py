"""System parameters, pulse schedules, and Hamiltonian builders.

Four dynamical models of one qubit transversely coupled to one cavity mode:

* lab frame:            H = w_c a+a + H_q + g(t) B (a + a+) + drive
* interaction picture:  exact frame rotation of the coupling by the bare
                        Hamiltonian, retaining counter-rotating terms; the
                        fastest surviving frequency is w_c + w_q
* RWA:                  excitation-conserving part only, g(a sigma+ e^{i Dt} + h.c.)
* dispersive:           (g^2/Delta) sigma_z a+a, the QND reference model

The ideal qubit has H_q = (w_q/2) sigma_z, B = sigma_x.  The transmon is an
inverted Duffing oscillator H_q = w_q b+b - (eps/2) b+b(b+b - 1) with B = b + b+,
where w_q is the 0->1 transition and eps = w_q(0->1) - w_q(1->2) > 0 is the
anharmonicity (the main-text operator A = 2 b+b - delta b+b(b+b-1)/w_q times
w_q/2 is this same H_q with delta = eps).

All frequencies/rates here are angular (rad/ns); see units.py.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from scipy.special import erfc

from .hilbert import HilbertDims, annihilation_op


@dataclass(frozen=True)
class Envelope:
    """Coupling envelope g(t); kind is one of erfc | square | constant.

    erfc form: g(t) = (g_max/4) Erfc(-v1 (t - t1)) Erfc(v1 (t - t2)),
    a smooth plateau between t1 and t2 with ramp rate v1.  The square form
    is used only as the robustness baseline; constant means g(t) = g_max.
    """

    kind: str = "constant"
    v1: float = 1.0
    t1: float = 0.0
    t2: float = 0.0

    def validate(self) -> list[str]:
        errs = []
        if self.kind not in ("erfc", "square", "constant"):
            errs.append(f"envelope.kind: unknown kind {self.kind!r}")
        if self.kind in ("erfc", "square"):
            if self.t1 < 0:
                errs.append("envelope.t1: must be >= 0")
            if self.t2 <= self.t1:
                errs.append("envelope.t2: must be > t1")
        if self.kind == "erfc" and self.v1 <= 0:
            errs.append("envelope.v1: must be > 0")
        return errs


@dataclass(frozen=True)
class GaussianDrive:
    """Resonant cavity drive with Gaussian envelope g_d exp(-(t-t1)^2/2 sigma^2).

    The carrier is fixed at the cavity frequency; in the cavity rotating frame
    the drive appears as a static quadrature term Omega_d(t)(a + a+).
    """

    g_d: float
    sigma: float
    t1: float

    def validate(self) -> list[str]:
        errs = []
        if self.sigma <= 0:
            errs.append("drive.sigma: must be > 0")
        return errs


@dataclass(frozen=True)
class SustainDrive:
    """Constant-amplitude resonant drive over [t_a, t_b], countering photon loss."""

    amplitude: float
    t_a: float
    t_b: float

    def validate(self) -> list[str]:
        errs = []
        if self.t_b <= self.t_a:
            errs.append("sustain.t_b: must be > t_a")
        return errs


@dataclass(frozen=True)
class PulseSchedule:
    envelope: Envelope = field(default_factory=Envelope)
    drive: Optional[GaussianDrive] = None
    sustain: Optional[SustainDrive] = None

    def validate(self) -> list[str]:
        errs = list(self.envelope.validate())
        if self.drive is not None:
            errs += self.drive.validate()
        if self.sustain is not None:
            errs += self.sustain.validate()
        return errs


@dataclass(frozen=True)
class SystemParams:
    """Physical parameters, all angular (rad/ns).

    delta_anh is the transmon anharmonicity eps (ignored for the ideal qubit);
    kappa_int/kappa_ext are cavity loss rates (their sum enters the Lindblad
    term).  The detuning Delta = w_q - w_c is always derived, never stored.
    """

    omega_c: float
    omega_q: float
    g_max: float
    delta_anh: float = 0.0
    kappa_int: float = 0.0
    kappa_ext: float = 0.0
    qubit_model: str = "ideal"
    dims: HilbertDims = field(default_factory=lambda: HilbertDims(2, 32))

    def __post_init__(self):
        if self.qubit_model not in ("ideal", "transmon"):
            raise ValueError(f"unknown qubit_model {self.qubit_model!r}")
        for name in ("g_max", "kappa_int", "kappa_ext"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.qubit_model == "ideal" and self.dims.qubit_levels != 2:
            raise ValueError("ideal qubit requires qubit_levels = 2")
        if self.qubit_model == "transmon" and self.dims.qubit_levels < 4:
            raise ValueError("transmon requires qubit_levels >= 4")

    @property
    def delta(self) -> float:
        return self.omega_q - self.omega_c

    @property
    def kappa(self) -> float:
        return self.kappa_int + self.kappa_ext

    @property
    def n_crit(self) -> float:
        """Critical photon number Delta^2 / 4 g_max^2 of the dispersive expansion."""
        return self.delta**2 / (4.0 * self.g_max**2)


# ---------------------------------------------------------------------------
# envelopes

def envelope_value(schedule: PulseSchedule, g_max: float, t):
    """Coupling rate g(t).  t may be a scalar or an array."""
    env = schedule.envelope
    if env.kind == "erfc":
        return (g_max / 4.0) * erfc(-env.v1 * (np.asarray(t) - env.t1)) * erfc(
            env.v1 * (np.asarray(t) - env.t2)
        )
    if env.kind == "square":
        t = np.asarray(t)
        return g_max * ((t >= env.t1) & (t <= env.t2)).astype(float)
    if env.kind == "constant":
        return g_max * np.ones_like(np.asarray(t, dtype=float))
    raise ValueError(f"unknown envelope kind {env.kind!r}")


def drive_value(schedule: PulseSchedule, t):
    """Real drive amplitude Omega_d(t) (rad/ns): Gaussian pulse plus sustain."""
    t = np.asarray(t, dtype=float)
    amp = np.zeros_like(t)
    if schedule.drive is not None:
        d = schedule.drive
        amp = amp + d.g_d * np.exp(-((t - d.t1) ** 2) / (2.0 * d.sigma**2))
    if schedule.sustain is not None:
        s = schedule.sustain
        amp = amp + s.amplitude * ((t >= s.t_a) & (t <= s.t_b)).astype(float)
    return amp


# ---------------------------------------------------------------------------
# local operators and bare energies

def qubit_energies(params: SystemParams) -> np.ndarray:
    """Bare qubit-side eigenenergies E_j (rad/ns), diagonal in the number basis."""
    k = params.dims.qubit_levels
    if params.qubit_model == "ideal":
        return np.array([-params.omega_q / 2.0, +params.omega_q / 2.0])
    j = np.arange(k, dtype=float)
    return params.omega_q * j - 0.5 * params.delta_anh * j * (j - 1.0)


def coupling_op_qubit(params: SystemParams) -> np.ndarray:
    """Qubit-side coupling operator B: sigma_x (ideal) or b + b+ (transmon)."""
    b = annihilation_op(params.dims, "qubit")
    return b + b.conj().T


def _cavity_ops(dims: HilbertDims):
    a = annihilation_op(dims, "cavity")
    return a, a.conj().T


def bare_phases(params: SystemParams, t: float) -> np.ndarray:
    """Diagonal of exp(-i H_0 t) over the joint basis (qubit-major)."""
    e_q = qubit_energies(params)
    n = np.arange(params.dims.cavity_cutoff, dtype=float)
    diag = e_q[:, None] + params.omega_c * n[None, :]
    return np.exp(-1j * diag * t).ravel()


def to_interaction_frame(params: SystemParams, psi_lab: np.ndarray, t: float) -> np.ndarray:
    """|psi_I> = U_0(t)^dagger |psi_lab>."""
    return np.conj(bare_phases(params, t)) * psi_lab


def to_lab_frame(params: SystemParams, psi_int: np.ndarray, t: float) -> np.ndarray:
    return bare_phases(params, t) * psi_int


# ---------------------------------------------------------------------------
# Hamiltonian builders (dense joint matrices, rad/ns)

def hamiltonian_lab(params: SystemParams, schedule: PulseSchedule, t: float) -> np.ndarray:
    """Full lab-frame Hamiltonian at time t."""
    dims = params.dims
    k, n = dims.qubit_levels, dims.cavity_cutoff
    a, adag = _cavity_ops(dims)
    nhat = adag @ a
    ik, inn = np.eye(k), np.eye(n)
    h = params.omega_c * np.kron(ik, nhat)
    h = h + np.kron(np.diag(qubit_energies(params)).astype(complex), inn)
    g = float(envelope_value(schedule, params.g_max, t))
    if g != 0.0:
        h = h + g * np.kron(coupling_op_qubit(params), a + adag)
    om = float(drive_value(schedule, t))
    if om != 0.0:
        ph = np.exp(1j * params.omega_c * t)
        h = h + om * np.kron(ik, ph * a + np.conj(ph) * adag)
    return h


def hamiltonian_rabi_interaction(params: SystemParams, schedule: PulseSchedule, t: float) -> np.ndarray:
    """Exact interaction-picture Hamiltonian (counter-rotating terms retained).

    H_I(t) = g(t) B_I(t) (x) X_I(t) + Omega_d(t) (a + a+), where B_I and X_I
    are the bare-frame rotations of B and (a + a+).  For the ideal qubit this
    is g(t)[a sigma+ e^{i Delta t} + a+ sigma+ e^{i(w_c+w_q)t} + h.c.].
    """
    dims = params.dims
    k, n = dims.qubit_levels, dims.cavity_cutoff
    a, adag = _cavity_ops(dims)
    phases_q = np.exp(1j * qubit_energies(params) * t)
    b_i = (phases_q[:, None] * coupling_op_qubit(params)) * np.conj(phases_q)[None, :]
    x_i = a * np.exp(-1j * params.omega_c * t) + adag * np.exp(1j * params.omega_c * t)
    g = float(envelope_value(schedule, params.g_max, t))
    h = g * np.kron(b_i, x_i)
    om = float(drive_value(schedule, t))
    if om != 0.0:
        h = h + om * np.kron(np.eye(k), a + adag)
    return h


def hamiltonian_rwa(params: SystemParams, schedule: PulseSchedule, t: float) -> np.ndarray:
    """Interaction picture with counter-rotating terms dropped (ideal qubit).

    Without a drive this conserves the total excitation number a+a + sigma+ sigma-.
    """
    if params.qubit_model != "ideal":
        raise ValueError("RWA model is defined for the ideal qubit only")
    dims = params.dims
    a, adag = _cavity_ops(dims)
    sm = annihilation_op(dims, "qubit")
    sp_ = sm.conj().T
    g = float(envelope_value(schedule, params.g_max, t))
    ph = np.exp(1j * params.delta * t)
    h = g * (np.kron(sp_, a) * ph + np.kron(sm, adag) * np.conj(ph))
    om = float(drive_value(schedule, t))
    if om != 0.0:
        h = h + om * np.kron(np.eye(2), a + adag)
    return h


def hamiltonian_dispersive(params: SystemParams, schedule: PulseSchedule, t: float) -> np.ndarray:
    """Dispersive model (g(t)^2/Delta) sigma_z a+a in the interaction picture.

    Diagonal in the joint number basis when no drive is present; commutes with
    sigma_z always, which is the QND condition.
    """
    if params.qubit_model != "ideal":
        raise ValueError("dispersive model is defined for the ideal qubit only")
    if params.delta == 0.0:
        raise ValueError("dispersive model is singular at zero detuning")
    dims = params.dims
    a, adag = _cavity_ops(dims)
    nhat = adag @ a
    sz = np.diag([-1.0, 1.0]).astype(complex)
    g = float(envelope_value(schedule, params.g_max, t))
    h = (g * g / params.delta) * np.kron(sz, nhat)
    om = float(drive_value(schedule, t))
    if om != 0.0:
        h = h + om * np.kron(np.eye(2), a + adag)
    return h
