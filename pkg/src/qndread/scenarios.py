"""Scenario runners: each emits one figure-class dataset as CSV + JSON.

Config files are plain key/value YAML with frequencies in cycle units
(GHz / MHz / kHz); conversion to angular frequency happens in exactly one
place (the build_* functions below).  Every run writes a manifest carrying
the config hash, package and dependency versions, and the seed, so any
artifact can be traced back to the inputs that produced it.  All outputs are
byte-deterministic for a fixed config; only the manifest timestamp varies
between reruns.
"""

from __future__ import annotations

import hashlib
import json
import math
import warnings
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .hilbert import (
    CavityStateSpec,
    HilbertDims,
    TruncationError,
    partial_trace,
    squeezed_coherent_state,
    tensor_state,
)
from .integrate import (
    IntegrationError,
    IntegratorConfig,
    evolve_schrodinger,
    make_applier,
    observables_series,
)
from .metrics import (
    dispersive_analytics,
    gaussian_indistinguishability,
    gaussian_summary,
    husimi_q,
    measurement_report,
    schmidt_disturbance,
)
from .models import Envelope, GaussianDrive, PulseSchedule, SustainDrive, SystemParams
from .moments import evolve_moments, initial_moments
from .search import (
    CANDIDATE_FIELDS,
    SearchConfig,
    SearchContext,
    SearchSpace,
    _optimize_envelope_at_tau,
    build_candidate,
    exact_cutoff,
    optimize_protocol,
    robustness_mc,
    time_to_fidelity,
)
from .units import ghz, khz, mhz


class ScenarioError(Exception):
    """Base for scenario-layer failures."""


class UnknownScenarioError(ScenarioError):
    pass


class ConfigInvalidError(ScenarioError):
    def __init__(self, violations):
        super().__init__("; ".join(violations))
        self.violations = list(violations)


class SimulationFailedError(ScenarioError):
    pass


# ---------------------------------------------------------------------------
# config plumbing

FREQ_BOUNDS = {
    "system.omega_q_ghz": (3.0, 7.0),
    "system.omega_c_ghz": (8.0, 11.0),
    "system.g_max_mhz": (0.0, 100.0),
}

REQUIRED = (
    "scenario",
    "tau_ns",
    "system.omega_c_ghz",
    "system.omega_q_ghz",
    "system.g_max_mhz",
    "pulse.envelope.kind",
    "cavity.alpha_re",
    "cavity.r",
)


def _get(cfg: dict, dotted: str):
    node = cfg
    for part in dotted.split("."):
        if not isinstance(node, dict) or part not in node:
            return None
        node = node[part]
    return node


def deep_merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = v
    return out


def validate_config(cfg: dict, override_bounds: bool = False) -> list:
    """All violations with field paths; empty list means the config is usable."""
    errs = []
    if not isinstance(cfg, dict):
        return ["config: expected a mapping at top level"]
    for path in REQUIRED:
        if _get(cfg, path) is None:
            errs.append(f"{path}: required field missing")
    if errs:
        return errs

    if cfg["scenario"] not in SCENARIOS:
        errs.append(f"scenario: unknown scenario {cfg['scenario']!r}")
    engine = cfg.get("engine", "exact")
    if engine not in ("exact", "moments"):
        errs.append(f"engine: must be exact or moments, got {engine!r}")
    tau = cfg.get("tau_ns")
    if not isinstance(tau, (int, float)) or tau <= 0:
        errs.append("tau_ns: must be a positive number")

    overridden = override_bounds or bool(cfg.get("override_bounds"))
    for path, (lo, hi) in FREQ_BOUNDS.items():
        val = _get(cfg, path)
        if not isinstance(val, (int, float)):
            errs.append(f"{path}: must be a number")
        elif not overridden and not (lo <= val <= hi):
            errs.append(f"{path}: {val} outside bound [{lo}, {hi}] "
                        "(pass override_bounds to allow)")

    model = _get(cfg, "system.qubit_model") or "ideal"
    if model not in ("ideal", "transmon"):
        errs.append(f"system.qubit_model: must be ideal or transmon, got {model!r}")
    if model == "transmon":
        k = _get(cfg, "system.qubit_levels") or 0
        if not isinstance(k, int) or k < 4:
            errs.append("system.qubit_levels: transmon needs at least 4 levels")
    kap = _get(cfg, "system.kappa_ext_mhz")
    if kap is not None and (not isinstance(kap, (int, float)) or kap < 0):
        errs.append("system.kappa_ext_mhz: must be >= 0")

    env = _get(cfg, "pulse.envelope") or {}
    kind = env.get("kind")
    if kind not in ("erfc", "square", "constant"):
        errs.append(f"pulse.envelope.kind: must be erfc, square or constant, got {kind!r}")
    if kind in ("erfc", "square"):
        t1, t2 = env.get("t1"), env.get("t2")
        for nm, v in (("t1", t1), ("t2", t2), ("v1", env.get("v1"))):
            if not isinstance(v, (int, float)):
                errs.append(f"pulse.envelope.{nm}: must be a number")
        if isinstance(t1, (int, float)) and isinstance(t2, (int, float)) and t2 < t1:
            errs.append("pulse.envelope.t2: must be >= t1")
        v1 = env.get("v1")
        if isinstance(v1, (int, float)) and v1 <= 0:
            errs.append("pulse.envelope.v1: must be > 0")

    r = _get(cfg, "cavity.r")
    if isinstance(r, (int, float)) and r < 0:
        errs.append("cavity.r: must be >= 0")
    cut = _get(cfg, "system.cavity_cutoff")
    if cut is not None and (not isinstance(cut, int) or cut < 8):
        errs.append("system.cavity_cutoff: must be an integer >= 8")
    seed = cfg.get("seed")
    if seed is not None and (not isinstance(seed, int) or seed < 0):
        errs.append("seed: must be a non-negative integer")
    return errs


def build_cavity(cfg: dict) -> CavityStateSpec:
    c = cfg["cavity"]
    alpha = complex(c["alpha_re"], c.get("alpha_im", 0.0))
    return CavityStateSpec(alpha, float(c["r"]), float(c.get("theta", 0.0)))


def build_system(cfg: dict, cutoff: int = None) -> SystemParams:
    s = cfg["system"]
    model = s.get("qubit_model", "ideal")
    levels = int(s.get("qubit_levels", 2 if model == "ideal" else 6))
    if cutoff is None:
        cutoff = s.get("cavity_cutoff")
    if cutoff is None:
        spec = build_cavity(cfg)
        pad = replace(spec, alpha=spec.alpha if abs(spec.alpha) > 0 else 3.0)
        cutoff = exact_cutoff(pad, 1.2)
    return SystemParams(
        omega_c=ghz(float(s["omega_c_ghz"])),
        omega_q=ghz(float(s["omega_q_ghz"])),
        g_max=mhz(float(s["g_max_mhz"])),
        delta_anh=mhz(float(s.get("delta_anh_mhz", 0.0))),
        kappa_int=khz(float(s.get("kappa_int_khz", 0.0))),
        kappa_ext=mhz(float(s.get("kappa_ext_mhz", 0.0))),
        qubit_model=model,
        dims=HilbertDims(levels, int(cutoff)),
    )


def build_schedule(cfg: dict) -> PulseSchedule:
    p = cfg.get("pulse", {})
    env = p.get("envelope", {})
    envelope = Envelope(kind=env.get("kind", "constant"),
                        v1=float(env.get("v1", 1.0)),
                        t1=float(env.get("t1", 0.0)),
                        t2=float(env.get("t2", 0.0)))
    drive = None
    if p.get("drive"):
        d = p["drive"]
        drive = GaussianDrive(g_d=mhz(float(d["amp_mhz"])),
                              sigma=float(d["sigma_ns"]),
                              t1=float(d["t1_ns"]))
    sustain = None
    if p.get("sustain"):
        s = p["sustain"]
        sustain = SustainDrive(amplitude=mhz(float(s["amp_mhz"])),
                               t_a=float(s["t_a_ns"]),
                               t_b=float(s["t_b_ns"]))
    return PulseSchedule(envelope=envelope, drive=drive, sustain=sustain)


def _integrator(cfg: dict, samples: int = None) -> IntegratorConfig:
    icfg = cfg.get("integrator", {})
    kw = {}
    if "rel_tol" in icfg:
        kw["rel_tol"] = float(icfg["rel_tol"])
    if "abs_tol" in icfg:
        kw["abs_tol"] = float(icfg["abs_tol"])
    if samples is not None:
        kw["samples"] = samples
    elif "samples" in icfg:
        kw["samples"] = int(icfg["samples"])
    return IntegratorConfig(**kw)


# ---------------------------------------------------------------------------
# output plumbing

def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        return f"{v:.12g}"
    if v is None:
        return ""
    return str(v)


def write_csv(path: Path, header, rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, complex):
        return [o.real, o.imag]
    raise TypeError(f"not JSON serializable: {type(o)}")


def write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True,
                               default=_json_default) + "\n", encoding="utf-8")


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"), default=_json_default)
    return hashlib.sha256(blob.encode()).hexdigest()


def write_manifest(out_dir: Path, cfg: dict, outputs) -> Path:
    import scipy

    manifest = {
        "scenario": cfg["scenario"],
        "config": cfg,
        "config_sha256": config_hash(cfg),
        "seed": int(cfg.get("seed", 0)),
        "engine": cfg.get("engine", "exact"),
        "versions": {
            "qndread": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "outputs": {p.name: hashlib.sha256(p.read_bytes()).hexdigest()
                    for p in outputs},
        "created_utc": datetime.now(timezone.utc).isoformat(),
    }
    path = out_dir / "manifest.json"
    write_json(path, manifest)
    return path


# ---------------------------------------------------------------------------
# scenario implementations

def _excited_population_series(params, schedule, spec, tau, level, samples, cfg_i):
    k = params.dims.qubit_levels
    q = np.zeros(k)
    q[level] = 1.0
    cav = squeezed_coherent_state(spec, params.dims.cavity_cutoff)
    psi0 = tensor_state(q, cav)
    ap = make_applier("rabi", params, schedule)
    traj = evolve_schrodinger(psi0, ap, (0.0, tau), replace(cfg_i, samples=samples))
    obs = observables_series(traj, [f"P{level}"])
    return traj.times, obs[f"P{level}"]


def run_recurrence(cfg: dict, out: Path) -> list:
    """Excited-branch population P(t) for each configured protocol variant."""
    args = cfg.get("scenario_args", {})
    samples = int(args.get("samples", 241))
    tau = float(cfg["tau_ns"])
    base = {k: cfg[k] for k in ("system", "pulse", "cavity")}
    variants = args.get("variants", {"protocol": {}})
    cols, series, times = [], [], None
    for name, override in variants.items():
        sub = deep_merge(base, override or {})
        sub_cfg = dict(cfg)
        sub_cfg.update(sub)
        params = build_system(sub_cfg)
        schedule = build_schedule(sub_cfg)
        spec = build_cavity(sub_cfg)
        t, p = _excited_population_series(params, schedule, spec, tau, 1,
                                          samples, _integrator(cfg))
        times = t
        cols.append(f"p_{name}")
        series.append(p)
    rows = [[times[i]] + [s[i] for s in series] for i in range(len(times))]
    csv_path = out / "recurrence.csv"
    write_csv(csv_path, ["t_ns"] + cols, rows)
    summary = {f"final_{c}": float(s[-1]) for c, s in zip(cols, series)}
    summary["return_errors"] = {c: float(abs(s[-1] - s[0])) for c, s in zip(cols, series)}
    json_path = out / "recurrence.json"
    write_json(json_path, summary)
    return [csv_path, json_path]


def run_fidelity_vs_tau(cfg: dict, out: Path) -> list:
    """D and d against interaction time, re-optimizing the envelope per point."""
    args = cfg.get("scenario_args", {})
    tau_grid = [float(t) for t in args.get("tau_grid_ns", [3, 4, 5, 6, 8, 10])]
    budget = args.get("budget", {"popsize": 40, "maxiter": 20, "nm_maxfev": 40})
    seed = int(cfg.get("seed", 0))
    s = cfg["system"]
    cav = cfg["cavity"]
    ctx = SearchContext(
        tau=tau_grid[0],
        alpha=abs(complex(cav["alpha_re"], cav.get("alpha_im", 0.0))),
        r=float(cav["r"]),
        qubit_model=s.get("qubit_model", "ideal"),
        qubit_levels=int(s.get("qubit_levels", 2)),
        delta_anh_mhz=float(s.get("delta_anh_mhz", 0.0)),
        d_bound=float(args.get("d_bound", 0.005)),
    )
    x_freqs = np.array([float(s["omega_q_ghz"]), float(s["omega_c_ghz"]),
                        float(s["g_max_mhz"])])
    rows = []
    seeds = np.random.SeedSequence(seed).spawn(len(tau_grid))
    warm = None
    for i, tau in enumerate(tau_grid):
        env = _optimize_envelope_at_tau(ctx, x_freqs, tau,
                                        int(seeds[i].generate_state(1)[0]),
                                        warm, budget)
        warm = env
        x = np.concatenate([x_freqs, env])
        ctx_tau = replace(ctx, tau=tau)
        cutoff = exact_cutoff(CavityStateSpec(ctx.alpha, ctx.r, 0.0), 1.15)
        params, schedule, spec = build_candidate(x, ctx_tau, cutoff)
        rep = measurement_report(params, schedule, spec, tau, engine="exact")
        rows.append([tau, rep.distinguishability, rep.d, env[3], env[0],
                     min(env[1], env[2]), max(env[1], env[2])])
    csv_path = out / "fidelity_vs_tau.csv"
    write_csv(csv_path, ["tau_ns", "D", "d", "theta", "v1", "t1", "t2"], rows)
    json_path = out / "fidelity_vs_tau.json"
    write_json(json_path, {"rows": len(rows), "best_D": max(r[1] for r in rows)})
    return [csv_path, json_path]


def run_time_vs_g(cfg: dict, out: Path) -> list:
    """Minimum tau to reach a target distinguishability per coupling rate."""
    args = cfg.get("scenario_args", {})
    s = cfg["system"]
    cav = cfg["cavity"]
    ctx = SearchContext(
        tau=float(args.get("tau_max_ns", 40.0)),
        alpha=abs(complex(cav["alpha_re"], cav.get("alpha_im", 0.0))),
        r=float(cav["r"]),
        qubit_model=s.get("qubit_model", "ideal"),
        qubit_levels=int(s.get("qubit_levels", 2)),
        delta_anh_mhz=float(s.get("delta_anh_mhz", 0.0)),
        d_bound=float(args.get("d_bound", 0.005)),
    )
    rows = time_to_fidelity(
        SearchSpace(),
        target_d=float(args.get("target_d", 0.99)),
        d_bound=ctx.d_bound,
        g_grid_mhz=[float(g) for g in args.get("g_grid_mhz", [40, 60, 80, 100])],
        context=ctx,
        x_freqs=[float(s["omega_q_ghz"]), float(s["omega_c_ghz"]), 0.0],
        tau_max=float(args.get("tau_max_ns", 40.0)),
        tau_tol=float(args.get("tau_tol_ns", 1.0)),
        seed=int(cfg.get("seed", 0)),
        budget=args.get("budget"),
    )
    csv_path = out / "time_vs_g.csv"
    write_csv(csv_path, ["g_mhz", "tau_min_ns", "reachable", "D", "d"],
              [[r["g_mhz"], r["tau_min"], r["reachable"], r["D"], r["d"]]
               for r in rows])
    json_path = out / "time_vs_g.json"
    write_json(json_path, {"rows": rows})
    return [csv_path, json_path]


def _da_sweep(cfg: dict):
    """Shared sweep for the DA-breakdown scenarios.

    The cavity starts empty and is driven to its working amplitude while the
    coupling stays constant; the detuning ratio is swept by moving the qubit
    frequency.  Per point this compares the full interaction, its dispersive
    reduction, and the moment surrogate.
    """
    args = cfg.get("scenario_args", {})
    ratios = [float(v) for v in args.get("delta_over_g_grid",
                                         [6, 8, 10, 12, 16, 20, 25, 30, 35, 40])]
    tau = float(cfg["tau_ns"])
    g_mhz = float(cfg["system"]["g_max_mhz"])
    wc = float(cfg["system"]["omega_c_ghz"])
    target_alpha = float(args.get("target_alpha", 3.0))
    schedule = build_schedule(cfg)
    cutoff = int(cfg["system"].get("cavity_cutoff", 72))
    vac = CavityStateSpec(0.0, 0.0, 0.0)
    points = []
    for ratio in ratios:
        wq = wc - ratio * g_mhz / 1000.0
        sub = deep_merge(cfg, {"system": {"omega_q_ghz": wq,
                                          "cavity_cutoff": cutoff}})
        params = build_system(sub)
        point = {"ratio": ratio, "delta_ghz": wq - wc}
        for tag, model in (("exact", "rabi"), ("da", "dispersive")):
            finals = []
            for level in (0, 1):
                q = np.zeros(params.dims.qubit_levels)
                q[level] = 1.0
                cavity = squeezed_coherent_state(vac, params.dims.cavity_cutoff)
                psi0 = tensor_state(q, cavity)
                ap = make_applier(model, params, schedule)
                traj = evolve_schrodinger(psi0, ap, (0.0, tau),
                                          IntegratorConfig(samples=2))
                finals.append(traj.final)
            a0 = _cavity_centroid(finals[0])
            a1 = _cavity_centroid(finals[1])
            point[f"dist_{tag}"] = abs(a0 - a1)
            point[f"flip_{tag}"] = max(
                schmidt_disturbance(finals[0], 0).p,
                schmidt_disturbance(finals[1], 1).p,
            )
        mom_finals = []
        for level in (0, 1):
            y0 = initial_moments(params, level, vac)
            traj = evolve_moments(y0, params, schedule, (0.0, tau),
                                  IntegratorConfig(samples=2))
            mom_finals.append(complex(traj.observables["a"][-1]))
        point["dist_moments"] = abs(mom_finals[0] - mom_finals[1])
        _, lam, _ = dispersive_analytics(params.g_max, params.delta, tau,
                                         target_alpha, schedule)
        point["dist_da_analytic"] = lam
        points.append(point)
    return points


def _cavity_centroid(state) -> complex:
    from .integrate import _pure_observable

    return complex(_pure_observable(state, "a"))


def run_da_distance(cfg: dict, out: Path) -> list:
    points = _da_sweep(cfg)
    rows = []
    for p in points:
        ref = p["dist_exact"]
        rel_da = abs(p["dist_da"] - ref) / ref * 100.0 if ref else float("nan")
        rel_mom = abs(p["dist_moments"] - ref) / ref * 100.0 if ref else float("nan")
        rows.append([p["ratio"], ref, p["dist_da"], p["dist_moments"],
                     p["dist_da_analytic"], rel_da, rel_mom])
    csv_path = out / "da_distance.csv"
    write_csv(csv_path, ["delta_over_g", "dist_exact", "dist_da", "dist_moments",
                         "dist_da_analytic", "rel_dev_da_pct", "rel_dev_moments_pct"],
              rows)
    json_path = out / "da_distance.json"
    write_json(json_path, {"rows": len(rows)})
    return [csv_path, json_path]


def run_da_flip(cfg: dict, out: Path) -> list:
    points = _da_sweep(cfg)
    rows = [[p["ratio"], p["flip_exact"], p["flip_da"]] for p in points]
    csv_path = out / "da_flip.csv"
    write_csv(csv_path, ["delta_over_g", "flip_exact", "flip_da"], rows)
    crossing = _crossing_ratio(points, 0.01)
    json_path = out / "da_flip.json"
    write_json(json_path, {"one_percent_crossing": crossing})
    return [csv_path, json_path]


def _crossing_ratio(points, level) -> float:
    """Largest ratio where the exact flip still exceeds the given level,
    linearly interpolated against the neighboring point."""
    xs = [p["ratio"] for p in points]
    ys = [p["flip_exact"] for p in points]
    crossing = None
    for i in range(len(xs) - 1):
        if (ys[i] - level) * (ys[i + 1] - level) <= 0 and ys[i] != ys[i + 1]:
            t = (level - ys[i]) / (ys[i + 1] - ys[i])
            crossing = xs[i] + t * (xs[i + 1] - xs[i])
    return crossing


def run_transmon_phasespace(cfg: dict, out: Path) -> list:
    """Final cavity Husimi-Q per initial transmon level."""
    args = cfg.get("scenario_args", {})
    levels = [int(v) for v in args.get("levels", [0, 1, 2, 3])]
    tau = float(cfg["tau_ns"])
    params = build_system(cfg)
    schedule = build_schedule(cfg)
    spec = build_cavity(cfg)
    cav = squeezed_coherent_state(spec, params.dims.cavity_cutoff)
    reduced, centroids = [], {}
    for level in levels:
        q = np.zeros(params.dims.qubit_levels)
        q[level] = 1.0
        psi0 = tensor_state(q, cav)
        ap = make_applier("rabi", params, schedule)
        traj = evolve_schrodinger(psi0, ap, (0.0, tau), IntegratorConfig(samples=2))
        rho_c = partial_trace(traj.final, keep="cavity")
        reduced.append(rho_c)
        # <a> = sum_m sqrt(m) rho[m, m-1]
        m = rho_c.matrix
        weights = np.sqrt(np.arange(1, params.dims.cavity_cutoff))
        centroids[str(level)] = complex(np.sum(np.diag(m, k=-1) * weights))
    window = args.get("window")
    if window:
        x_lo, x_hi, p_lo, p_hi = [float(v) for v in window]
    else:
        cs = np.array(list(centroids.values()))
        xs, ps = np.sqrt(2) * cs.real, np.sqrt(2) * cs.imag
        pad = 4.0
        x_lo, x_hi = xs.min() - pad, xs.max() + pad
        p_lo, p_hi = ps.min() - pad, ps.max() + pad
    n_grid = int(args.get("grid_points", 81))
    x_grid = np.linspace(x_lo, x_hi, n_grid)
    p_grid = np.linspace(p_lo, p_hi, n_grid)
    q_maps = [husimi_q(rho, x_grid, p_grid) for rho in reduced]
    rows = []
    for j, pv in enumerate(p_grid):
        for i, xv in enumerate(x_grid):
            rows.append([xv, pv] + [qm[j, i] for qm in q_maps])
    csv_path = out / "transmon_phasespace.csv"
    write_csv(csv_path, ["x", "p"] + [f"q_level{l}" for l in levels], rows)
    json_path = out / "transmon_phasespace.json"
    write_json(json_path, {"centroids": centroids,
                           "window": [x_lo, x_hi, p_lo, p_hi]})
    return [csv_path, json_path]


def run_transmon_leakage(cfg: dict, out: Path) -> list:
    """Transmon level populations over time for one initial level."""
    args = cfg.get("scenario_args", {})
    level = int(args.get("initial_level", 1))
    n_report = int(args.get("report_levels", 4))
    samples = int(args.get("samples", 141))
    tau = float(cfg["tau_ns"])
    params = build_system(cfg)
    schedule = build_schedule(cfg)
    spec = build_cavity(cfg)
    q = np.zeros(params.dims.qubit_levels)
    q[level] = 1.0
    cav = squeezed_coherent_state(spec, params.dims.cavity_cutoff)
    psi0 = tensor_state(q, cav)
    ap = make_applier("rabi", params, schedule)
    traj = evolve_schrodinger(psi0, ap, (0.0, tau),
                              replace(_integrator(cfg), samples=samples))
    names = [f"P{j}" for j in range(n_report)]
    obs = observables_series(traj, names)
    rows = [[traj.times[i]] + [obs[nm][i] for nm in names]
            for i in range(len(traj.times))]
    csv_path = out / "transmon_leakage.csv"
    write_csv(csv_path, ["t_ns"] + [nm.lower() for nm in names], rows)
    final = {nm.lower(): float(obs[nm][-1]) for nm in names}
    json_path = out / "transmon_leakage.json"
    write_json(json_path, {"initial_level": level, "final_populations": final,
                           "return_population": final[f"p{level}"]})
    return [csv_path, json_path]


def run_loss_sustain(cfg: dict, out: Path) -> list:
    """Photon number and distinguishability with loss, with and without a
    sustain drive, against the lossless baseline.

    Runs on the moment engine: cavity decay and the sustain drive enter the
    first and second moments exactly, and the figure-level quantities (mean
    photon number, Gaussian distinguishability) live there.
    """
    if cfg.get("engine", "moments") == "exact":
        raise ConfigInvalidError(
            ["engine: loss-sustain runs on the moment engine"])
    args = cfg.get("scenario_args", {})
    samples = int(args.get("samples", 161))
    tau = float(cfg["tau_ns"])
    schedule = build_schedule(cfg)
    if schedule.sustain is None:
        raise ConfigInvalidError(["pulse.sustain: required for loss-sustain"])
    spec = build_cavity(cfg)
    cases = {
        "sustain": (build_system(cfg, cutoff=32), schedule),
        "no_sustain": (build_system(cfg, cutoff=32),
                       replace(schedule, sustain=None)),
        "no_loss": (build_system(deep_merge(cfg, {"system": {"kappa_ext_mhz": 0.0,
                                                             "kappa_int_khz": 0.0}}),
                                 cutoff=32),
                    replace(schedule, sustain=None)),
    }
    icfg = IntegratorConfig(samples=samples)
    n_series, summary = {}, {}
    times = None
    for name, (params, sched) in cases.items():
        branch_stats = []
        for level in (0, 1):
            y0 = initial_moments(params, level, spec)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                traj = evolve_moments(y0, params, sched, (0.0, tau), icfg)
            times = traj.times
            branch_stats.append(traj)
        n_series[name] = np.asarray(branch_stats[1].observables["n"], dtype=float)
        gs = []
        for traj in branch_stats:
            a = complex(traj.observables["a"][-1])
            a2 = complex(traj.observables["a2"][-1])
            nm_ = float(traj.observables["n"][-1])
            gs.append(gaussian_summary(a, a2, nm_))
        f = gaussian_indistinguishability(gs[0][0], gs[0][1], gs[1][0], gs[1][1])
        summary[name] = {"D": float(1.0 - min(max(f, 0.0), 1.0)),
                         "final_n": float(n_series[name][-1])}
    rows = [[times[i], n_series["sustain"][i], n_series["no_sustain"][i],
             n_series["no_loss"][i]] for i in range(len(times))]
    csv_path = out / "loss_sustain.csv"
    write_csv(csv_path, ["t_ns", "n_sustain", "n_no_sustain", "n_no_loss"], rows)
    summary["n_ratio_sustain"] = summary["sustain"]["final_n"] / summary["no_loss"]["final_n"]
    summary["n_ratio_no_sustain"] = summary["no_sustain"]["final_n"] / summary["no_loss"]["final_n"]
    json_path = out / "loss_sustain.json"
    write_json(json_path, summary)
    return [csv_path, json_path]


def run_robustness(cfg: dict, out: Path) -> list:
    """Monte-Carlo pulse-jitter sweep with the square-envelope baseline."""
    args = cfg.get("scenario_args", {})
    s = cfg["system"]
    cav = cfg["cavity"]
    env = cfg["pulse"]["envelope"]
    ctx = SearchContext(
        tau=float(cfg["tau_ns"]),
        alpha=abs(complex(cav["alpha_re"], cav.get("alpha_im", 0.0))),
        r=float(cav["r"]),
        qubit_model=s.get("qubit_model", "ideal"),
        qubit_levels=int(s.get("qubit_levels", 2)),
        delta_anh_mhz=float(s.get("delta_anh_mhz", 0.0)),
    )
    x = [float(s["omega_q_ghz"]), float(s["omega_c_ghz"]), float(s["g_max_mhz"]),
         float(env["v1"]), float(env["t1"]), float(env["t2"]),
         float(cav.get("theta", 0.0))]
    rows = robustness_mc(
        x, ctx,
        pct_grid=[float(v) for v in args.get("sigma_pct_grid", [0, 1, 2, 3, 4, 5])],
        samples=int(args.get("samples", 200)),
        seed=int(cfg.get("seed", 0)),
        engine=cfg.get("engine", "moments"),
    )
    csv_path = out / "robustness.csv"
    write_csv(csv_path,
              ["envelope", "sigma_pct", "mean_disturbance", "std", "se",
               "samples", "flagged"],
              [[r["envelope"], r["sigma_pct"], r["mean_disturbance"], r["std"],
                r["se"], r["samples"], r["flagged"]] for r in rows])
    json_path = out / "robustness.json"
    write_json(json_path, {"rows": rows})
    return [csv_path, json_path]


def run_optimize(cfg: dict, out: Path) -> list:
    """Generic optimization run persisting the full result."""
    args = cfg.get("scenario_args", {})
    s = cfg["system"]
    cav = cfg["cavity"]
    ctx = SearchContext(
        tau=float(cfg["tau_ns"]),
        alpha=abs(complex(cav["alpha_re"], cav.get("alpha_im", 0.0))),
        r=float(cav["r"]),
        kappa_khz=float(s.get("kappa_ext_mhz", 0.0)) * 1e3,
        qubit_model=s.get("qubit_model", "ideal"),
        qubit_levels=int(s.get("qubit_levels", 2)),
        delta_anh_mhz=float(s.get("delta_anh_mhz", 0.0)),
        d_bound=float(args.get("d_bound", 0.005)),
    )
    space_kw = {}
    for key in ("omega_q_ghz", "omega_c_ghz", "g_max_mhz", "v1", "t_a", "t_b",
                "theta"):
        if key in args.get("bounds", {}):
            space_kw[key] = tuple(float(v) for v in args["bounds"][key])
    space = SearchSpace(**space_kw)
    budget = args.get("budget", {})
    env = cfg["pulse"]["envelope"]
    warm = [float(s["omega_q_ghz"]), float(s["omega_c_ghz"]),
            float(s["g_max_mhz"]), float(env.get("v1", 1.0)),
            float(env.get("t1", 0.0)), float(env.get("t2", cfg["tau_ns"])),
            float(cav.get("theta", 0.0))]
    scfg = SearchConfig(
        seed=int(cfg.get("seed", 0)),
        de_popsize_factor=int(budget.get("de_popsize_factor", 15)),
        de_maxiter=int(budget.get("de_maxiter", 40)),
        nm_candidates=int(budget.get("nm_candidates", 5)),
        nm_maxfev=int(budget.get("nm_maxfev", 60)),
        warm_starts=(warm,),
    )
    res = optimize_protocol(space, cfg=scfg, context=ctx, d_bound=ctx.d_bound)
    json_path = out / "optimize.json"
    json_path.write_text(res.to_json() + "\n", encoding="utf-8")
    csv_path = out / "optimize_log.csv"
    write_csv(csv_path,
              ["phase", "objective", "D", "d"] + list(CANDIDATE_FIELDS),
              [[row["phase"], row["objective"], row.get("D"), row.get("d")]
               + [row["x"][i] for i in range(7)] for row in res.log_top])
    return [json_path, csv_path]


SCENARIOS = {
    "recurrence": (run_recurrence,
                   "excited-branch population P(t) per protocol variant"),
    "fidelity-vs-tau": (run_fidelity_vs_tau,
                        "D and d against interaction time, envelope re-optimized per point"),
    "time-vs-g": (run_time_vs_g,
                  "minimum tau reaching a target D per coupling rate"),
    "da-distance": (run_da_distance,
                    "centroid separation: full model vs dispersive vs moments"),
    "da-flip": (run_da_flip,
                "qubit flip probability across the detuning sweep"),
    "transmon-phasespace": (run_transmon_phasespace,
                            "final cavity Husimi-Q per initial transmon level"),
    "transmon-leakage": (run_transmon_leakage,
                         "transmon level populations during the protocol"),
    "loss-sustain": (run_loss_sustain,
                     "photon number and D with loss, sustain on/off"),
    "robustness": (run_robustness,
                   "Monte-Carlo pulse-jitter disturbance with square baseline"),
    "optimize": (run_optimize, "constrained protocol search, persisted result"),
}


def run_scenario(name: str, cfg: dict) -> dict:
    """Execute one scenario; returns {'outputs': [paths], 'manifest': path}."""
    if name not in SCENARIOS:
        raise UnknownScenarioError(f"unknown scenario {name!r}; "
                                   f"known: {', '.join(sorted(SCENARIOS))}")
    cfg = dict(cfg)
    cfg["scenario"] = name
    violations = validate_config(cfg)
    if violations:
        raise ConfigInvalidError(violations)
    out = Path(cfg.get("out", f"runs/{name}"))
    out.mkdir(parents=True, exist_ok=True)
    runner = SCENARIOS[name][0]
    try:
        outputs = runner(cfg, out)
    except (TruncationError, IntegrationError) as exc:
        raise SimulationFailedError(f"{type(exc).__name__}: {exc}") from exc
    manifest = write_manifest(out, cfg, outputs)
    return {"outputs": [str(p) for p in outputs], "manifest": str(manifest)}
