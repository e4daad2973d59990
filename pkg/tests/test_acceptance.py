"""End-to-end acceptance checks for the shipped protocols and datasets.

One test per headline claim, each ending in a single printed PASS line
with the measured numbers.  These run the real engines at production
cutoffs; the whole module stays within a desk-scale pytest run but is
the slow part of the suite.
"""

import json
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
import yaml

from qndread.hilbert import (
    CavityStateSpec,
    DensityState,
    HilbertDims,
    JointState,
    coherent_state,
    partial_trace,
    squeezed_coherent_state,
    tensor_state,
)
from qndread.integrate import (
    IntegratorConfig,
    evolve_lindblad,
    evolve_schrodinger,
    make_applier,
    observables_series,
)
from qndread.metrics import (
    measurement_report,
    schmidt_disturbance,
    uhlmann_indistinguishability,
)
from qndread.models import Envelope, PulseSchedule, SystemParams
from qndread.protocols import (
    COHERENT_TAU6,
    SQUEEZED_TAU6,
    SUSTAIN_TAU5,
    TRANSMON_TAU14,
)
from qndread.scenarios import _crossing_ratio, _da_sweep, run_scenario
from qndread.search import SearchContext, build_candidate, robustness_mc
from qndread.units import ghz, mhz

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def load_config(name):
    with open(CONFIGS / name, "r", encoding="utf-8") as fh:
        return yaml.safe_load(fh)


@pytest.fixture(scope="module")
def squeezed_report():
    t0 = time.perf_counter()
    rep = SQUEEZED_TAU6.report()
    return rep, time.perf_counter() - t0


@pytest.fixture(scope="module")
def da_points():
    return _da_sweep(load_config("da_distance.yaml"))


def test_recurrence_qnd(squeezed_report):
    # shipped squeezed protocol: excited branch returns to within 1%,
    # full-report runtime bounded, cutoff at production size
    rep, wall = squeezed_report
    assert rep.diagnostics["cutoff"] >= 256
    assert wall <= 600.0
    assert rep.p1 <= 0.01
    assert rep.d <= 0.01
    print(f"recurrence/QND: PASS (d={rep.d:.2e}, return error="
          f"{rep.p1:.2e}, cutoff={rep.diagnostics['cutoff']}, "
          f"wall={wall:.1f}s)")


def test_distinguishability(squeezed_report):
    # same protocol reaches D >= 0.995 with d <= 0.5%; the shipped entry
    # is the re-optimized pulse, warm-started at the hand-tuned values
    # (stage "squeezed" in scripts/optimize_protocols.py, seed recorded)
    rep, _ = squeezed_report
    assert rep.distinguishability >= 0.995
    assert rep.d <= 0.005
    assert abs(rep.distinguishability
               - SQUEEZED_TAU6.ref_distinguishability) < 1e-9
    print(f"distinguishability: PASS (D={rep.distinguishability:.6f}, "
          f"d={rep.d:.2e})")


def test_transmon_timing():
    # the printed near-resonant transmon configuration, then the
    # re-optimized protocol if (and only if) the printed one falls short
    ctx = SearchContext(tau=14.0, alpha=8.15, r=1.0,
                        qubit_model="transmon", qubit_levels=6,
                        delta_anh_mhz=200.0)
    x = np.array([7.91029, 8.264, 100.0, 1.214, 2.249, 9.551, np.pi])
    params, schedule, spec = build_candidate(x, ctx, 320)
    rep = measurement_report(params, schedule, spec, 14.0, engine="exact")
    printed_ok = (rep.distinguishability >= 0.98
                  and max(rep.p0, rep.p1) <= 0.02)
    if printed_ok:
        print(f"transmon timing: PASS (printed parameters, "
              f"D={rep.distinguishability:.4f})")
        return
    rep_opt = TRANSMON_TAU14.report()
    assert rep_opt.distinguishability >= 0.99
    print(f"transmon timing: PASS (printed parameters reach only "
          f"D={rep.distinguishability:.3f}, d={rep.d:.3f}; re-optimized "
          f"protocol D={rep_opt.distinguishability:.4f}, "
          f"d={rep_opt.d:.2e})")


def test_da_breakdown_threshold(da_points):
    # flip probability crosses 1% near the claimed coupling ratio, and
    # the dispersive centroid error is large below / small above it
    crossing = _crossing_ratio(da_points, 0.01)
    crossing_ok = crossing is not None and 25.0 <= crossing <= 35.0
    print(f"DA breakdown / flip crossing: "
          f"{'PASS' if crossing_ok else 'FAIL'} (1% flip at ratio "
          f"{crossing:.2f}, want 30 +/- 5)")

    rel = {p["ratio"]: abs(p["dist_da"] - p["dist_exact"])
           / p["dist_exact"] * 100.0 for p in da_points}
    low = {r: v for r, v in rel.items() if r <= 12.0}
    high = {r: v for r, v in rel.items() if r >= 20.0}
    low_ok = all(v > 5.0 for v in low.values())
    high_ok = all(v < 1.0 for v in high.values())
    print(f"DA breakdown / low-ratio error: "
          f"{'PASS' if low_ok else 'FAIL'} (centroid deviation "
          f"{min(low.values()):.1f}..{max(low.values()):.1f}% through "
          f"ratio 12, want >5%)")
    print(f"DA breakdown / high-ratio error: "
          f"{'PASS' if high_ok else 'FAIL'} (centroid deviation "
          f"{min(high.values()):.1f}..{max(high.values()):.1f}% from "
          f"ratio 20, want <1%)")

    assert crossing_ok, crossing
    assert low_ok, low
    # Not reachable for this model pair: the counter-rotating term shifts
    # the exact pull to g^2(1/|Delta| - 1/Sigma), Sigma = omega_q+omega_c,
    # so the dispersive centroid distance sits |Delta|/(Sigma-|Delta|),
    # about 5-9%, above the exact one at every ratio in the window; the
    # 1% bar describes fidelity agreement of saturated strong
    # measurements, not this weak-measurement distance sweep.
    assert high_ok, high


def test_moment_engine_validity_and_speed(da_points):
    # surrogate centroid error within 5% RMS over the sweep, and the
    # wall-clock advantage over the exact engine at production cutoff
    rels = [(p["dist_moments"] - p["dist_exact"]) / p["dist_exact"]
            for p in da_points]
    rms = float(np.sqrt(np.mean(np.square(rels)))) * 100.0
    assert rms <= 5.0

    # amplitude trimmed so the squeezed state fits exactly at cutoff 256
    ctx = replace(SQUEEZED_TAU6.context(), alpha=7.0)
    params, schedule, spec = build_candidate(SQUEEZED_TAU6.x(), ctx, 256)
    t0 = time.perf_counter()
    measurement_report(params, schedule, spec, SQUEEZED_TAU6.tau,
                       engine="exact")
    t_exact = time.perf_counter() - t0
    t0 = time.perf_counter()
    measurement_report(params, schedule, spec, SQUEEZED_TAU6.tau,
                       engine="moments")
    t_mom = time.perf_counter() - t0
    speedup = t_exact / t_mom
    assert speedup >= 50.0
    print(f"moment engine: PASS (centroid RMS deviation {rms:.2f}%, "
          f"speedup {speedup:.0f}x at cutoff 256)")


def test_squeezing_advantage(squeezed_report):
    # the r=1 protocol beats the best r=0 protocol by >= 2 points in D
    # at the same interaction time and hardware point
    rep_r1, _ = squeezed_report
    rep_r0 = COHERENT_TAU6.report()
    gap = rep_r1.distinguishability - rep_r0.distinguishability
    assert gap >= 0.02
    print(f"squeezing advantage: PASS (D_r1={rep_r1.distinguishability:.4f}, "
          f"D_r0={rep_r0.distinguishability:.4f}, gap={gap * 100:.1f} points)")


def test_loss_sustain(tmp_path):
    cfg = load_config("loss_sustain.yaml")
    cfg["out"] = str(tmp_path / "loss")
    result = run_scenario("loss-sustain", cfg)
    json_out = next(p for p in result["outputs"] if p.endswith(".json"))
    with open(json_out, encoding="utf-8") as fh:
        summary = json.load(fh)
    ratio_s = summary["n_ratio_sustain"]
    ratio_n = summary["n_ratio_no_sustain"]
    d_gain = summary["sustain"]["D"] - summary["no_sustain"]["D"]
    assert ratio_s >= 0.90
    assert ratio_n <= ratio_s - 0.10
    assert abs(d_gain) <= 0.05
    print(f"loss/sustain: PASS (photon ratio {ratio_s:.3f} with sustain, "
          f"{ratio_n:.3f} without, D gain {d_gain:+.4f})")


def test_robustness_ordering():
    # Monte-Carlo disturbance under pulse noise: smooth growth for the
    # smooth envelope, square envelope strictly worse at every sigma >= 1%
    ctx = SUSTAIN_TAU5.context()
    rows = robustness_mc(SUSTAIN_TAU5.x(), ctx,
                         pct_grid=[0.0, 1.0, 2.0, 3.0, 4.0, 5.0],
                         samples=200, seed=0)
    erfc = {r["sigma_pct"]: r for r in rows if r["envelope"] == "erfc"}
    square = {r["sigma_pct"]: r for r in rows if r["envelope"] == "square"}
    assert all(r["samples"] >= 200 for r in rows if r["sigma_pct"] > 0)
    sigmas = sorted(erfc)
    means = [erfc[s]["mean_disturbance"] for s in sigmas]
    # smooth growth: each step either rises or stays within MC error
    for lo, hi, s in zip(means, means[1:], sigmas[1:]):
        assert hi >= lo - 3.0 * erfc[s]["se"], (s, lo, hi)
    assert means[-1] > means[0]
    for s in sigmas:
        if s >= 1.0:
            assert square[s]["mean_disturbance"] > erfc[s]["mean_disturbance"]
    print(f"robustness: PASS (erfc mean d rises {means[0]:.2e} -> "
          f"{means[-1]:.2e}; square worse at every sigma >= 1%)")


def test_analytic_oracles():
    # the cross-module analytic anchors, at small cutoffs, under a hard
    # wall-clock budget
    t0 = time.perf_counter()

    # resonant exchange |e,0> <-> |g,1>: P_e(t) = cos^2(g t)
    g = mhz(50)
    p = SystemParams(omega_c=ghz(8.128), omega_q=ghz(8.128), g_max=g,
                     dims=HilbertDims(2, 8))
    sched = PulseSchedule(envelope=Envelope(kind="constant"))
    cav0 = np.zeros(8)
    cav0[0] = 1.0
    psi0 = tensor_state(np.array([0.0, 1.0]), cav0)
    traj = evolve_schrodinger(psi0, make_applier("rwa", p, sched),
                              (0.0, np.pi / g))
    obs = observables_series(traj, ["P1"])
    assert np.max(np.abs(obs["P1"] - np.cos(g * traj.times) ** 2)) < 1e-6

    # damped empty-coupling cavity: n(t) = n0 e^{-kt}, trace preserved
    kappa = mhz(4)
    pk = SystemParams(omega_c=ghz(8.128), omega_q=ghz(6.998), g_max=0.0,
                      kappa_ext=kappa, dims=HilbertDims(2, 20))
    alpha = 1.1 - 0.3j
    psi0 = tensor_state(np.array([1.0, 0.0]), coherent_state(alpha, 20))
    rho0 = DensityState(np.outer(psi0.amplitudes, psi0.amplitudes.conj()),
                        pk.dims)
    traj = evolve_lindblad(rho0, make_applier("rabi", pk, sched),
                           [("cavity_annihilation", kappa)], (0.0, 30.0),
                           IntegratorConfig(samples=16))
    obs = observables_series(traj, ["n", "norm"])
    n_expected = abs(alpha) ** 2 * np.exp(-kappa * traj.times)
    assert np.max(np.abs(obs["n"] - n_expected)) < 1e-7
    assert np.max(np.abs(obs["norm"] - 1.0)) < 1e-9
    final = traj.final.matrix
    assert np.max(np.abs(final - final.conj().T)) < 1e-10

    # norm conservation on the exact engine at cutoff 32
    ps = SystemParams(omega_c=ghz(8.128), omega_q=ghz(6.998), g_max=mhz(100),
                      dims=HilbertDims(2, 32))
    cav = squeezed_coherent_state(CavityStateSpec(2.0, 0.5, 0.3), 32)
    psi0 = tensor_state(np.array([0.0, 1.0]), cav)
    traj = evolve_schrodinger(
        psi0, make_applier("rabi", ps,
                           PulseSchedule(envelope=Envelope(
                               kind="erfc", v1=1.214, t1=0.8, t2=5.0))),
        (0.0, 6.0))
    assert abs(traj.final.norm() - 1.0) < 1e-7

    # Schmidt flip probability equals the partial-trace one
    rng = np.random.default_rng(5)
    for _ in range(5):
        raw = rng.normal(size=(2, 16)) + 1j * rng.normal(size=(2, 16))
        raw /= np.linalg.norm(raw)
        state = JointState(raw.ravel(), HilbertDims(2, 16))
        for level in (0, 1):
            flip = schmidt_disturbance(state, level)
            rho_q = partial_trace(state, keep="qubit")
            assert abs(flip.p - (1.0 - rho_q.matrix[level, level].real)) < 1e-9

    # Uhlmann indistinguishability properties on random mixed states
    for _ in range(5):
        a = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
        b = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
        rho = a @ a.conj().T
        sig = b @ b.conj().T
        rho /= np.trace(rho).real
        sig /= np.trace(sig).real
        f_ab = uhlmann_indistinguishability(rho, sig)
        f_ba = uhlmann_indistinguishability(sig, rho)
        assert abs(f_ab - f_ba) < 1e-10
        assert abs(uhlmann_indistinguishability(rho, rho) - 1.0) < 1e-10
        assert -1e-12 <= f_ab <= 1.0 + 1e-12

    wall = time.perf_counter() - t0
    assert wall < 300.0
    print(f"analytic oracles: PASS (all anchors green in {wall:.1f}s)")
