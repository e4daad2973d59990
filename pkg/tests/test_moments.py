"""Cumulant-closure engine against the exact engine and closed-form limits.

The load-bearing oracle here is the short-time derivative check: moments are
extracted from an exact wavefunction trajectory, differentiated with a
4th-order central stencil, and compared against the closed-form moment rhs.
At T = 0.08 ns the finite-difference floor is ~4e-6 relative, so agreement at
1e-4 pins every coefficient of the equations of motion.
"""

import warnings

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from qndread.hilbert import CavityStateSpec, HilbertDims
from qndread.integrate import IntegratorConfig, evolve_schrodinger, make_applier, observables_series
from qndread.models import Envelope, GaussianDrive, PulseSchedule, SystemParams
from qndread.moments import (
    closure_error_report,
    derive_moment_rhs,
    evolve_moments,
    initial_moments,
    moment_observables,
    moments_from_state,
)
from qndread.units import ghz, mhz

OFF_ENV = Envelope(kind="erfc", v1=1.214, t1=1000.0, t2=2000.0)
PULSE = PulseSchedule(envelope=Envelope(kind="erfc", v1=1.214, t1=0.8, t2=5.0),
                      drive=GaussianDrive(g_d=mhz(30), sigma=1.0, t1=1.0))
SPEC = CavityStateSpec(1.2 + 0.4j, 0.3, 0.7)


def _ideal(cutoff=48, **kw):
    kw.setdefault("omega_c", ghz(8.128))
    kw.setdefault("omega_q", ghz(6.998))
    kw.setdefault("g_max", mhz(100))
    return SystemParams(dims=HilbertDims(2, cutoff), **kw)


def _transmon(cutoff=48, levels=4, **kw):
    kw.setdefault("omega_c", ghz(8.128))
    kw.setdefault("omega_q", ghz(6.998))
    kw.setdefault("g_max", mhz(100))
    kw.setdefault("delta_anh", mhz(200))
    return SystemParams(qubit_model="transmon", dims=HilbertDims(levels, cutoff), **kw)


def _prepare(params, level, cavity):
    from qndread.hilbert import squeezed_coherent_state, tensor_state

    k = params.dims.qubit_levels
    qub = np.zeros(k)
    qub[level] = 1.0
    cav = squeezed_coherent_state(cavity, params.dims.cavity_cutoff)
    return tensor_state(qub, cav)


def test_initial_moments_match_state_extraction():
    for params, level in [(_ideal(), 0), (_ideal(), 1),
                          (_transmon(), 0), (_transmon(), 1), (_transmon(), 2)]:
        y_direct = initial_moments(params, level, SPEC)
        y_state = moments_from_state(_prepare(params, level, SPEC), params)
        assert np.max(np.abs(y_direct - y_state)) < 1e-9


# the transmon level-1 bar is looser: a Fock-1 qubit marginal is non-Gaussian,
# so the Wick substitution in <a b+ b b> starts to drift at the 1e-4 scale while
# coefficient mistakes would show at ~1e-2
@pytest.mark.parametrize("model,level,bar", [("ideal", 0, 1e-4), ("ideal", 1, 1e-4),
                                             ("transmon", 0, 1e-4), ("transmon", 1, 5e-4)])
def test_short_time_derivative_oracle(model, level, bar):
    params = _ideal() if model == "ideal" else _transmon()
    psi0 = _prepare(params, level, SPEC)
    cfg = IntegratorConfig(rel_tol=1e-11, abs_tol=1e-13, samples=81)
    traj = evolve_schrodinger(psi0, make_applier("rabi", params, PULSE), (0.0, 0.08), cfg)
    ys = np.array([moments_from_state(s, params) for s in traj.states])
    h = traj.times[1] - traj.times[0]
    rhs = derive_moment_rhs(params, PULSE)
    scale = np.max(np.abs(ys))
    worst = 0.0
    for i in range(2, len(traj.times) - 2):
        fd = (-ys[i + 2] + 8 * ys[i + 1] - 8 * ys[i - 1] + ys[i - 2]) / (12 * h)
        an = rhs(traj.times[i], ys[i])
        worst = max(worst, np.max(np.abs(fd - an)) / (np.max(np.abs(an)) + scale))
    assert worst < bar


def test_kernel_matches_python_reference():
    # the compiled stepper and the closed-form python rhs must be the same equations
    rng = np.random.default_rng(5)
    for params in (_ideal(cutoff=16, kappa_ext=mhz(3)), _transmon(cutoff=16, kappa_ext=mhz(3))):
        y0 = initial_moments(params, 1, SPEC)
        y0 = y0 + 0.01 * rng.normal(size=14)
        rhs = derive_moment_rhs(params, PULSE)
        sol = solve_ivp(rhs, (0.0, 1.0), y0, method="RK45", rtol=1e-11, atol=1e-13,
                        t_eval=[0.0, 1.0])
        with warnings.catch_warnings():
            # synthetic perturbation may push |<s_z>| past 1; not under test here
            warnings.simplefilter("ignore", RuntimeWarning)
            traj = evolve_moments(y0, params, PULSE, (0.0, 1.0),
                                  IntegratorConfig(rel_tol=1e-11, abs_tol=1e-13, samples=2))
        assert np.max(np.abs(traj.states[-1] - sol.y[:, -1])) < 1e-6


def test_harmonic_limit_is_closure_exact():
    # eps = 0 makes the transmon a plain oscillator; the closure is then exact
    # and any moment deviation is pure integration error
    params = _transmon(cutoff=24, levels=6, delta_anh=0.0)
    spec = CavityStateSpec(1.0, 0.0, 0.0)
    psi0 = _prepare(params, 0, spec)
    cfg = IntegratorConfig(rel_tol=1e-11, abs_tol=1e-13, samples=31)
    exact = evolve_schrodinger(psi0, make_applier("rabi", params, PULSE), (0.0, 3.0), cfg)
    ys_exact = np.array([moments_from_state(s, params) for s in exact.states])
    traj = evolve_moments(initial_moments(params, 0, spec), params, PULSE, (0.0, 3.0), cfg)
    assert np.max(np.abs(traj.states - ys_exact)) < 1e-6


def test_damped_cavity_analytics():
    kappa = mhz(4)
    params = _ideal(cutoff=24, kappa_ext=kappa)
    sched = PulseSchedule(envelope=OFF_ENV)
    alpha = 1.3 - 0.4j
    spec = CavityStateSpec(alpha, 0.0, 0.0)
    y0 = initial_moments(params, 0, spec)
    traj = evolve_moments(y0, params, sched, (0.0, 40.0), IntegratorConfig(samples=21))
    t = traj.times
    ys = np.asarray(traj.states)
    a_lab = ys[:, 0] + 1j * ys[:, 1]
    n = ys[:, 4]
    z = ys[:, 5]
    a_expected = alpha * np.exp(-(1j * params.omega_c + kappa / 2) * t)
    assert np.max(np.abs(a_lab - a_expected)) < 1e-8
    assert np.max(np.abs(n - abs(alpha) ** 2 * np.exp(-kappa * t))) < 1e-8
    assert np.max(np.abs(z - (-1.0))) < 1e-10


def test_moment_observables_in_rotating_frame():
    params = _ideal(cutoff=24)
    sched = PulseSchedule(envelope=OFF_ENV)
    alpha = 0.9 + 0.5j
    y0 = initial_moments(params, 1, CavityStateSpec(alpha, 0.0, 0.0))
    traj = evolve_moments(y0, params, sched, (0.0, 10.0), IntegratorConfig(samples=11))
    obs = traj.observables
    # undriven lossless cavity: rotating-frame centroid is constant
    assert np.max(np.abs(obs["a"] - alpha)) < 1e-8
    assert np.max(np.abs(obs["sigma_z"] - 1.0)) < 1e-10


def test_invariant_warning_fires():
    params = _ideal(cutoff=16)
    y0 = initial_moments(params, 0, CavityStateSpec(0.5, 0.0, 0.0))
    y0[5] = 1.5  # unphysical qubit inversion
    with pytest.warns(RuntimeWarning):
        evolve_moments(y0, params, PulseSchedule(envelope=OFF_ENV), (0.0, 0.1),
                       IntegratorConfig(samples=3))


def test_determinism_bitwise():
    params = _ideal(cutoff=16)
    y0 = initial_moments(params, 1, SPEC)
    t1 = evolve_moments(y0, params, PULSE, (0.0, 6.0))
    t2 = evolve_moments(y0, params, PULSE, (0.0, 6.0))
    assert np.array_equal(t1.states, t2.states)


def test_fixed_step_agrees_with_adaptive():
    params = _ideal(cutoff=16)
    y0 = initial_moments(params, 1, SPEC)
    tight = IntegratorConfig(rel_tol=1e-11, abs_tol=1e-13, samples=7)
    fixed = IntegratorConfig(method="fixed_rk4", max_step=1e-3, samples=7)
    ta = evolve_moments(y0, params, PULSE, (0.0, 2.0), tight)
    tf = evolve_moments(y0, params, PULSE, (0.0, 2.0), fixed)
    assert np.max(np.abs(ta.states[-1] - tf.states[-1])) < 1e-6


def test_closure_error_report_on_protocol_run():
    params = _ideal(cutoff=64)
    spec = CavityStateSpec(3.0, 0.0, 0.0)
    sched = PulseSchedule(envelope=Envelope(kind="erfc", v1=1.214, t1=0.8, t2=5.0))
    cfg = IntegratorConfig(samples=61)
    psi0 = _prepare(params, 1, spec)
    exact = evolve_schrodinger(psi0, make_applier("rabi", params, sched), (0.0, 6.0), cfg)
    mom = evolve_moments(initial_moments(params, 1, spec), params, sched, (0.0, 6.0), cfg)
    report = closure_error_report(mom, exact)
    assert report["max_abs_dev"] < 0.02 * report["scale"]
    with pytest.raises(ValueError):
        bad = evolve_moments(initial_moments(params, 1, spec), params, sched, (0.0, 6.0),
                             IntegratorConfig(samples=11))
        closure_error_report(bad, exact)


def test_moments_meta_reports_engine():
    params = _ideal(cutoff=16)
    y0 = initial_moments(params, 0, SPEC)
    traj = evolve_moments(y0, params, PULSE, (0.0, 1.0))
    assert traj.kind == "moments"
    assert traj.meta["engine"] == "moments"
    assert traj.meta["nfev"] > 0
