"""Measurement-quality functionals for dispersive-free qubit readout.

Distinguishability of the two conditional cavity states is quantified by the
Uhlmann indistinguishability F = Tr sqrt(sqrt(rho1) rho0 sqrt(rho1)), reported
as D = 1 - F.  Back-action on the qubit is quantified by the flip probability
p_x of each initial state, combined from the Schmidt weights of the final
joint state as p_x = eps_x + q_x - 2 eps_x q_x, and summarized as the
disturbance d = max(p0, p1).  A protocol measures well when D -> 1 and stays
quantum-non-demolition when d -> 0.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import quad

from .hilbert import (
    CavityStateSpec,
    DensityState,
    HilbertDims,
    JointState,
    matrix_sqrt_psd,
    partial_trace,
    squeezed_coherent_state,
    tensor_state,
)
from .integrate import (
    IntegratorConfig,
    Trajectory,
    evolve_schrodinger,
    make_applier,
    observables_series,
)
from .models import PulseSchedule, SystemParams, envelope_value


# ---------------------------------------------------------------------------
# fidelity / indistinguishability

def uhlmann_indistinguishability(rho0, rho1) -> float:
    """F = Tr sqrt(sqrt(rho1) rho0 sqrt(rho1)) for density matrices."""
    m0 = rho0.matrix if isinstance(rho0, DensityState) else np.asarray(rho0)
    m1 = rho1.matrix if isinstance(rho1, DensityState) else np.asarray(rho1)
    if m0.shape != m1.shape:
        raise ValueError(f"dimension mismatch {m0.shape} vs {m1.shape}")
    s1 = matrix_sqrt_psd(m1)
    inner = s1 @ m0 @ s1
    # Hermitize against roundoff before the spectral square root
    inner = 0.5 * (inner + inner.conj().T)
    ev = np.linalg.eigvalsh(inner)
    ev = np.clip(ev, 0.0, None)
    # rank-deficient inputs leave ~1e-8 sqrt noise; fidelity is bounded by 1
    return float(min(np.sum(np.sqrt(ev)), 1.0))


def pure_branch_indistinguishability(joint0: JointState, joint1: JointState) -> float:
    """F between the reduced cavity states of two pure joint states.

    For rho_x = Tr_q |Psi_x><Psi_x| the fidelity is the nuclear norm of the
    qubit_levels x qubit_levels overlap block, which avoids ever forming the
    cutoff-sized density matrices.
    """
    if joint0.dims != joint1.dims:
        raise ValueError("dimension mismatch")
    g0 = joint0.grid()
    g1 = joint1.grid()
    overlap = np.conj(g0) @ g1.T
    return float(np.sum(np.linalg.svd(overlap, compute_uv=False)))


def gaussian_indistinguishability(mean0, cov0, mean1, cov1) -> float:
    """F between two single-mode Gaussian states.

    Means are (x, p) with x = sqrt(2) Re<a>, p = sqrt(2) Im<a>; covariances
    are 2x2 symmetric quadrature matrices (vacuum = I/2).  Used as the
    moment-engine surrogate for the exact branch fidelity.
    """
    v0 = np.asarray(cov0, dtype=float)
    v1 = np.asarray(cov1, dtype=float)
    dmu = np.asarray(mean1, dtype=float) - np.asarray(mean0, dtype=float)
    vs = v0 + v1
    big_delta = 4.0 * np.linalg.det(vs)
    lam = 16.0 * (np.linalg.det(v0) - 0.25) * (np.linalg.det(v1) - 0.25)
    lam = max(lam, 0.0)
    denom = np.sqrt(big_delta + lam) - np.sqrt(lam)
    expo = float(dmu @ np.linalg.solve(vs, dmu))
    f2 = 2.0 * np.exp(-0.5 * expo) / denom
    return float(min(np.sqrt(max(f2, 0.0)), 1.0))


def gaussian_summary(a_mean: complex, a2_mean: complex, n_mean: float):
    """(mean, cov) quadrature form of first/second cavity moments."""
    caa = a2_mean - a_mean * a_mean
    cada = n_mean - abs(a_mean) ** 2
    vxx = caa.real + cada + 0.5
    vpp = -caa.real + cada + 0.5
    vxp = caa.imag
    mean = np.array([np.sqrt(2.0) * a_mean.real, np.sqrt(2.0) * a_mean.imag])
    cov = np.array([[vxx, vxp], [vxp, vpp]])
    return mean, cov


# ---------------------------------------------------------------------------
# Schmidt disturbance

@dataclass
class SchmidtDecomposition:
    """Two-branch Schmidt data of a final joint state for initial level x.

    epsilon is the total minor weight, q the rotation weight of the major
    qubit branch away from |x>.  Convention: qubit vectors are gauged so the
    |x> component is real non-negative; phi is then the phase of the major
    branch's |1-x> component and theta the residual phase carried by the
    minor branch after cavity vectors are gauged to a real-positive dominant
    component.  When epsilon = 0.5 the branch split is degenerate: the flag
    is set and the first singular vector is reported as major.
    """

    epsilon: float
    q: float
    theta: float
    phi: float
    major_qubit: np.ndarray
    minor_qubit: np.ndarray
    major_cavity: np.ndarray
    minor_cavity: np.ndarray
    p: float
    initial_level: int
    degenerate: bool = False


def schmidt_disturbance(joint_final: JointState, initial_qubit_index: int) -> SchmidtDecomposition:
    """Schmidt weights and flip probability p_x = eps + q - 2 eps q."""
    g = joint_final.grid()
    k = g.shape[0]
    x = initial_qubit_index
    if not 0 <= x < k:
        raise ValueError("initial qubit index out of range")
    u, sv, vh = np.linalg.svd(g, full_matrices=False)
    w = sv**2
    w = w / w.sum()
    eps = float(np.sum(w[1:]))
    degenerate = abs(eps - 0.5) < 1e-12
    uq = u[:, 0].copy()
    uq_min = u[:, 1].copy() if len(sv) > 1 else np.zeros_like(uq)
    vc = vh[0].conj().copy()
    vc_min = vh[1].conj().copy() if len(sv) > 1 else np.zeros_like(vc)
    # gauge: qubit |x> component real >= 0, cavity dominant component real >= 0
    thetas = []
    for uvec, cvec in ((uq, vc), (uq_min, vc_min)):
        ref = uvec[x] if abs(uvec[x]) > 1e-14 else uvec[np.argmax(np.abs(uvec))]
        if abs(ref) > 1e-14:
            ph = ref / abs(ref)
            uvec *= np.conj(ph)
            cvec *= ph
        cref = cvec[np.argmax(np.abs(cvec))]
        if abs(cref) > 1e-14:
            cph = cref / abs(cref)
            cvec *= np.conj(cph)
            thetas.append(np.angle(cph))
        else:
            thetas.append(0.0)
    theta = float(thetas[1] - thetas[0]) if len(sv) > 1 else 0.0
    q = float(1.0 - abs(uq[x]) ** 2)
    others = np.abs(uq).copy()
    others[x] = 0.0
    j = int(np.argmax(others))
    phi = float(np.angle(uq[j])) if others[j] > 1e-14 else 0.0
    p = eps + q - 2.0 * eps * q
    return SchmidtDecomposition(
        epsilon=eps,
        q=q,
        theta=theta,
        phi=phi,
        major_qubit=uq,
        minor_qubit=uq_min,
        major_cavity=vc,
        minor_cavity=vc_min,
        p=float(p),
        initial_level=x,
        degenerate=degenerate,
    )


# ---------------------------------------------------------------------------
# full protocol report

@dataclass
class ReadoutReport:
    indistinguishability: float
    distinguishability: float
    p0: float
    p1: float
    d: float
    schmidt: list
    centroids: dict
    times: np.ndarray
    engine: str
    flip_estimator: str
    leakage: Optional[list] = None
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "indistinguishability": self.indistinguishability,
            "distinguishability": self.distinguishability,
            "p0": self.p0,
            "p1": self.p1,
            "d": self.d,
            "engine": self.engine,
            "flip_estimator": self.flip_estimator,
            "diagnostics": self.diagnostics,
        }
        if self.leakage is not None:
            out["leakage"] = self.leakage
        return out


def _branch_initial(params: SystemParams, cavity: CavityStateSpec, level: int) -> JointState:
    k = params.dims.qubit_levels
    q = np.zeros(k)
    q[level] = 1.0
    cav = squeezed_coherent_state(cavity, params.dims.cavity_cutoff)
    return tensor_state(q, cav)


def measurement_report(
    params: SystemParams,
    schedule: PulseSchedule,
    cavity: CavityStateSpec,
    tau: float,
    engine: str = "exact",
    cfg: Optional[IntegratorConfig] = None,
    model: str = "rabi",
    levels=(0, 1),
) -> ReadoutReport:
    """Run both qubit branches of a readout protocol and score it.

    The cavity branch states are compared at t = tau (the envelope should be
    back at zero there; a warning-level diagnostic records the residual
    coupling).  engine "exact" propagates wavefunctions; "moments" uses the
    closed moment equations with a Gaussian fidelity surrogate and a
    mean-occupation flip estimate.
    """
    if engine not in ("exact", "moments"):
        raise ValueError(f"unknown engine {engine!r}")
    cfg = cfg or IntegratorConfig()
    t_start = time.perf_counter()
    if params.g_max > 0:
        residual = envelope_value(schedule, params.g_max, tau) / params.g_max
    else:
        residual = 0.0

    if engine == "exact":
        trajs = []
        for lvl in levels:
            psi0 = _branch_initial(params, cavity, lvl)
            ap = make_applier(model, params, schedule)
            traj = evolve_schrodinger(psi0, ap, (0.0, tau), cfg)
            observables_series(traj, ["a"])
            trajs.append(traj)
        f = pure_branch_indistinguishability(trajs[0].final, trajs[1].final)
        schmidts = [
            schmidt_disturbance(traj.final, lvl) for traj, lvl in zip(trajs, levels)
        ]
        if params.qubit_model == "ideal":
            flips = [s.p for s in schmidts]
            estimator = "schmidt"
            leakage = None
        else:
            # population route covers leakage out of the 0/1 subspace
            flips = []
            leakage = []
            for traj, lvl in zip(trajs, levels):
                rho_q = partial_trace(traj.final, keep="qubit").matrix
                pops = np.diag(rho_q).real
                flips.append(float(1.0 - pops[lvl]))
                leakage.append([float(p) for p in pops])
            estimator = "population"
        centroids = {
            str(lvl): np.asarray(traj.observables["a"])
            for traj, lvl in zip(trajs, levels)
        }
        times = trajs[0].times
        diag = {
            "nfev": [t.meta["nfev"] for t in trajs],
            "max_norm_drift": max(t.meta["max_norm_drift"] for t in trajs),
            "residual_coupling": float(residual),
            "cutoff": params.dims.cavity_cutoff,
        }
    else:
        from .moments import evolve_moments, initial_moments

        trajs = []
        for lvl in levels:
            y0 = initial_moments(params, lvl, cavity)
            traj = evolve_moments(y0, params, schedule, (0.0, tau), cfg)
            trajs.append(traj)
        gauss = []
        for traj in trajs:
            a = complex(traj.observables["a"][-1])
            a2 = complex(traj.observables["a2"][-1])
            nm = float(traj.observables["n"][-1])
            gauss.append(gaussian_summary(a, a2, nm))
        f = gaussian_indistinguishability(gauss[0][0], gauss[0][1], gauss[1][0], gauss[1][1])
        if params.qubit_model == "ideal":
            flips = []
            for traj, lvl in zip(trajs, levels):
                z = float(traj.observables["sigma_z"][-1])
                z0 = -1.0 if lvl == 0 else 1.0
                flips.append(0.5 * abs(z - z0))
            estimator = "sigma_z_drift"
        else:
            flips = [
                float(abs(traj.observables["nb"][-1] - lvl))
                for traj, lvl in zip(trajs, levels)
            ]
            estimator = "mean_occupation_drift"
        leakage = None
        schmidts = []
        centroids = {
            str(lvl): np.asarray(traj.observables["a"])
            for traj, lvl in zip(trajs, levels)
        }
        times = trajs[0].times
        diag = {
            "nfev": [t.meta["nfev"] for t in trajs],
            "residual_coupling": float(residual),
        }
    diag["wall_s"] = time.perf_counter() - t_start
    f = float(min(max(f, 0.0), 1.0))
    p0, p1 = float(flips[0]), float(flips[1])
    return ReadoutReport(
        indistinguishability=f,
        distinguishability=1.0 - f,
        p0=p0,
        p1=p1,
        d=max(p0, p1),
        schmidt=schmidts,
        centroids=centroids,
        times=times,
        engine=engine,
        flip_estimator=estimator,
        leakage=leakage,
        diagnostics=diag,
    )


# ---------------------------------------------------------------------------
# dispersive-limit analytics and centroid geometry

def dispersive_analytics(g: float, delta: float, tau: float, alpha: complex, schedule: PulseSchedule):
    """(phi, lambda, n_crit): accumulated conditional phase, centroid
    distance 2|alpha| sin|phi|, and the critical photon number delta^2/4g^2.

    phi integrates the actual envelope, phi = int_0^tau g(t)^2/delta dt.
    """
    if delta == 0.0:
        raise ValueError("dispersive analytics undefined at zero detuning")
    env = schedule.envelope
    pts = [t for t in (env.t1, env.t2) if 0.0 < t < tau]
    val, _ = quad(
        lambda t: envelope_value(schedule, g, t) ** 2 / delta,
        0.0,
        tau,
        points=pts or None,
        limit=200,
    )
    phi = float(val)
    lam = 2.0 * abs(alpha) * abs(np.sin(abs(phi)))
    n_crit = delta**2 / (4.0 * g**2) if g != 0 else np.inf
    return phi, lam, n_crit


def centroid_distance(traj0: Trajectory, traj1: Trajectory, t: float) -> float:
    """|<a>_0(t) - <a>_1(t)| in the cavity rotating frame."""
    vals = []
    for traj in (traj0, traj1):
        if "a" not in traj.observables:
            if traj.kind == "moments":
                raise ValueError("moment trajectory lacks its observable cache")
            observables_series(traj, ["a"])
        a = np.asarray(traj.observables["a"])
        tt = traj.times
        re = np.interp(t, tt, a.real)
        im = np.interp(t, tt, a.imag)
        vals.append(re + 1j * im)
    return float(abs(vals[0] - vals[1]))


# ---------------------------------------------------------------------------
# phase space

def husimi_q(cavity_state, x_grid, p_grid):
    """Husimi Q(alpha)/pi on a quadrature grid, alpha = (x + i p)/sqrt(2).

    cavity_state is a cavity vector, a cavity density matrix, or a
    DensityState holding one.  Returns an array of shape
    (len(p_grid), len(x_grid)).
    """
    xs = np.asarray(x_grid, dtype=float)
    ps = np.asarray(p_grid, dtype=float)
    alpha = (xs[None, :] + 1j * ps[:, None]) / np.sqrt(2.0)
    flat = alpha.ravel()
    if isinstance(cavity_state, DensityState):
        cavity_state = cavity_state.matrix
    state = np.asarray(cavity_state)
    n = state.shape[0]
    logfact = np.cumsum(np.concatenate(([0.0], np.log(np.arange(1, n)))))
    # <alpha|n> = e^{-|a|^2/2} conj(a)^n / sqrt(n!)
    with np.errstate(divide="ignore"):
        lg = np.where(
            np.abs(flat)[:, None] > 0,
            np.arange(n)[None, :] * np.log(np.abs(flat) + 1e-300)[:, None],
            np.where(np.arange(n)[None, :] == 0, 0.0, -np.inf),
        )
    mag = np.exp(lg - 0.5 * logfact[None, :] - 0.5 * (np.abs(flat) ** 2)[:, None])
    phase = np.exp(-1j * np.angle(flat)[:, None] * np.arange(n)[None, :])
    bra = mag * phase
    if state.ndim == 1:
        amp = bra @ state
        q = np.abs(amp) ** 2 / np.pi
    else:
        q = np.real(np.einsum("in,nm,im->i", bra, state, np.conj(bra))) / np.pi
    return q.reshape(alpha.shape)
