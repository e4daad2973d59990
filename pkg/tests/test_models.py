"""Parameter validation, pulse shapes, and Hamiltonian builder invariants."""

import dataclasses

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qndread.hilbert import HilbertDims
from qndread.models import (
    Envelope,
    GaussianDrive,
    PulseSchedule,
    SustainDrive,
    SystemParams,
    bare_phases,
    drive_value,
    envelope_value,
    hamiltonian_dispersive,
    hamiltonian_lab,
    hamiltonian_rabi_interaction,
    hamiltonian_rwa,
    qubit_energies,
    to_interaction_frame,
    to_lab_frame,
)
from qndread.units import ghz, khz, mhz, to_ghz


ERFC_ENV = Envelope(kind="erfc", v1=1.214, t1=0.8, t2=5.0)


def _ideal(cutoff=8, **kw):
    kw.setdefault("omega_c", ghz(8.128))
    kw.setdefault("omega_q", ghz(6.998))
    kw.setdefault("g_max", mhz(100))
    return SystemParams(dims=HilbertDims(2, cutoff), **kw)


def test_unit_conversions():
    assert ghz(1.0) == 2 * np.pi
    assert abs(mhz(1000) - ghz(1.0)) < 1e-15
    assert abs(khz(1e6) - ghz(1.0)) < 1e-12
    assert abs(to_ghz(ghz(3.7)) - 3.7) < 1e-12


def test_envelope_frozen_values():
    # erfc plateau values frozen from a 30-digit quadrature of the closed form
    sched = PulseSchedule(envelope=ERFC_ENV)
    assert abs(envelope_value(sched, 1.0, 1.3) - 0.80467181248536642) < 1e-12
    assert abs(envelope_value(sched, 1.0, 4.7) - 0.69674325829041639) < 1e-12


def test_envelope_square_and_constant():
    sq = PulseSchedule(envelope=Envelope(kind="square", t1=1.0, t2=3.0))
    assert envelope_value(sq, 2.0, 0.5) == 0.0
    assert envelope_value(sq, 2.0, 2.0) == 2.0
    const = PulseSchedule(envelope=Envelope(kind="constant"))
    t = np.linspace(0, 5, 7)
    assert np.all(envelope_value(const, 1.5, t) == 1.5)


@given(st.floats(-5, 15))
def test_envelope_bounded(t):
    sched = PulseSchedule(envelope=ERFC_ENV)
    v = float(envelope_value(sched, 1.0, t))
    assert -1e-15 <= v <= 1.0 + 1e-12


def test_envelope_validation_messages():
    errs = Envelope(kind="erfc", v1=-1.0, t1=3.0, t2=1.0).validate()
    assert any("v1" in e for e in errs)
    assert any("t2" in e for e in errs)
    assert Envelope(kind="nope").validate()
    assert Envelope(kind="constant").validate() == []


def test_schedule_validation_aggregates():
    sched = PulseSchedule(
        envelope=Envelope(kind="erfc", v1=0.0, t1=0.0, t2=1.0),
        drive=GaussianDrive(g_d=1.0, sigma=-1.0, t1=0.0),
        sustain=SustainDrive(amplitude=0.1, t_a=2.0, t_b=1.0),
    )
    errs = sched.validate()
    assert len(errs) == 3


def test_drive_value_shapes():
    sched = PulseSchedule(
        envelope=Envelope(kind="constant"),
        drive=GaussianDrive(g_d=mhz(60), sigma=1.0, t1=2.0),
        sustain=SustainDrive(amplitude=mhz(5), t_a=4.0, t_b=8.0),
    )
    assert abs(drive_value(sched, 2.0) - mhz(60)) < 1e-14
    # three sigma out the Gaussian is ~1% of peak
    assert drive_value(sched, 2.0 + 3.0) < 0.012 * mhz(60) + mhz(5)
    assert abs(drive_value(sched, 6.0) - (mhz(5) + mhz(60) * np.exp(-8.0))) < 1e-12
    assert drive_value(sched, 20.0) < 1e-30


def test_system_params_derived_quantities():
    p = _ideal()
    assert abs(p.delta - (ghz(6.998) - ghz(8.128))) < 1e-14
    assert p.kappa == 0.0
    assert abs(p.n_crit - p.delta**2 / (4 * p.g_max**2)) < 1e-12
    with pytest.raises(dataclasses.FrozenInstanceError):
        p.g_max = 1.0


def test_system_params_rejects_bad_input():
    with pytest.raises(ValueError):
        _ideal(qubit_model="spin7")
    with pytest.raises(ValueError):
        _ideal(g_max=-1.0)
    with pytest.raises(ValueError):
        SystemParams(omega_c=ghz(8), omega_q=ghz(7), g_max=mhz(10),
                     qubit_model="transmon", dims=HilbertDims(3, 8))


def test_qubit_energies_ideal_and_transmon():
    p = _ideal()
    assert np.allclose(qubit_energies(p), [-p.omega_q / 2, p.omega_q / 2])
    pt = SystemParams(omega_c=ghz(8.128), omega_q=ghz(7.0), g_max=mhz(80),
                      delta_anh=mhz(200), qubit_model="transmon",
                      dims=HilbertDims(5, 8))
    j = np.arange(5.0)
    expected = pt.omega_q * j - 0.5 * mhz(200) * j * (j - 1)
    assert np.allclose(qubit_energies(pt), expected)
    # anharmonicity shrinks each successive transition by eps
    gaps = np.diff(qubit_energies(pt))
    assert np.allclose(np.diff(gaps), -mhz(200))


def test_hamiltonians_hermitian():
    sched = PulseSchedule(envelope=ERFC_ENV,
                          drive=GaussianDrive(g_d=mhz(30), sigma=1.0, t1=1.0))
    p = _ideal(cutoff=6)
    pt = SystemParams(omega_c=ghz(8.128), omega_q=ghz(7.0), g_max=mhz(80),
                      delta_anh=mhz(200), qubit_model="transmon",
                      dims=HilbertDims(4, 6))
    for t in (0.0, 1.7, 4.2):
        for h in (hamiltonian_lab(p, sched, t),
                  hamiltonian_rabi_interaction(p, sched, t),
                  hamiltonian_rwa(p, sched, t),
                  hamiltonian_dispersive(p, sched, t),
                  hamiltonian_lab(pt, sched, t),
                  hamiltonian_rabi_interaction(pt, sched, t)):
            assert np.max(np.abs(h - h.conj().T)) < 1e-12
    assert hamiltonian_lab(p, sched, 1.0).shape == (12, 12)
    assert hamiltonian_lab(pt, sched, 1.0).shape == (24, 24)


def test_rwa_and_dispersive_ideal_only():
    pt = SystemParams(omega_c=ghz(8.128), omega_q=ghz(7.0), g_max=mhz(80),
                      delta_anh=mhz(200), qubit_model="transmon",
                      dims=HilbertDims(4, 6))
    sched = PulseSchedule(envelope=ERFC_ENV)
    with pytest.raises(ValueError):
        hamiltonian_rwa(pt, sched, 0.0)
    with pytest.raises(ValueError):
        hamiltonian_dispersive(pt, sched, 0.0)


def test_dispersive_singular_at_zero_detuning():
    p = _ideal(omega_q=ghz(8.128))
    with pytest.raises(ValueError):
        hamiltonian_dispersive(p, PulseSchedule(envelope=ERFC_ENV), 0.0)


def test_dispersive_commutes_with_sigma_z():
    p = _ideal(cutoff=6)
    h = hamiltonian_dispersive(p, PulseSchedule(envelope=ERFC_ENV), 2.0)
    sz = np.kron(np.diag([-1.0, 1.0]), np.eye(6))
    assert np.max(np.abs(h @ sz - sz @ h)) == 0.0


def test_rwa_conserves_excitation_number():
    p = _ideal(cutoff=6)
    h = hamiltonian_rwa(p, PulseSchedule(envelope=ERFC_ENV), 1.3)
    n_exc = np.kron(np.diag([0.0, 1.0]), np.eye(6)) + np.kron(np.eye(2), np.diag(np.arange(6.0)))
    assert np.max(np.abs(h @ n_exc - n_exc @ h)) < 1e-12


def test_frame_round_trip_and_unitarity():
    p = _ideal(cutoff=8)
    rng = np.random.default_rng(3)
    psi = rng.normal(size=16) + 1j * rng.normal(size=16)
    psi /= np.linalg.norm(psi)
    t = 2.31
    back = to_lab_frame(p, to_interaction_frame(p, psi, t), t)
    assert np.max(np.abs(back - psi)) < 1e-12
    assert abs(np.linalg.norm(to_interaction_frame(p, psi, t)) - 1.0) < 1e-12
    assert np.max(np.abs(np.abs(bare_phases(p, t)) - 1.0)) < 1e-12


def test_bare_phases_match_energies():
    p = _ideal(cutoff=3)
    t = 0.7
    e_q = qubit_energies(p)
    expected = np.exp(-1j * (e_q[:, None] + p.omega_c * np.arange(3)[None, :]) * t)
    assert np.allclose(bare_phases(p, t), expected.ravel(), atol=1e-14)
