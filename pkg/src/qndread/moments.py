"""Gaussian moment-closure engine: 14 coupled real ODEs per qubit model.

Second-order moments of the joint system are propagated in the lab frame
with third and fourth moments closed by discarding cumulants beyond second
order, e.g. <XYZ> -> <XY><Z> + <XZ><Y> + <YZ><X> - 2<X><Y><Z> in the
operator order written.  Counter-rotating terms are kept, so the equations
oscillate at w_c + w_q and the step count tracks the exact solver; the
per-step cost is what drops by orders of magnitude.

Ideal qubit state vector (14 reals):
    [Re<a>, Im<a>, Re<a^2>, Im<a^2>, <a+a>, <s_z>,
     Re<s->, Im<s->, Re<a s_z>, Im<a s_z>,
     Re<a s->, Im<a s->, Re<a s+>, Im<a s+>]
(<a+ s-> = conj<a s+> is not independent, which is why the set closes at 14.)

Transmon state vector (14 reals):
    [Re<a>, Im<a>, Re<b>, Im<b>, Re<a^2>, Im<a^2>, Re<b^2>, Im<b^2>,
     <a+a>, <b+b>, Re<ab>, Im<ab>, Re<ab+>, Im<ab+>]

The adaptive path is a jit-compiled Dormand-Prince 5(4) loop (pure-python
fallback if compilation is unavailable); fixed_rk4 runs the reference python
right-hand side.  Rotating-frame observables are derived on output.
"""

from __future__ import annotations

import cmath
import math
import time
import warnings
from typing import Optional

import numpy as np

from .hilbert import CavityStateSpec, JointState
from .integrate import IntegratorConfig, IntegrationError, Trajectory, _drive_scalar, _env_scalar, default_max_step
from .models import PulseSchedule, SystemParams, qubit_energies

try:
    from numba import njit

    HAVE_NUMBA = True
except Exception:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]):
            return args[0]

        def wrap(f):
            return f

        return wrap


N_MOMENTS = 14

IDEAL_LABELS = (
    "Re<a>", "Im<a>", "Re<a2>", "Im<a2>", "<n>", "<sz>",
    "Re<s->", "Im<s->", "Re<a sz>", "Im<a sz>",
    "Re<a s->", "Im<a s->", "Re<a s+>", "Im<a s+>",
)
TRANSMON_LABELS = (
    "Re<a>", "Im<a>", "Re<b>", "Im<b>", "Re<a2>", "Im<a2>",
    "Re<b2>", "Im<b2>", "<na>", "<nb>",
    "Re<ab>", "Im<ab>", "Re<ab+>", "Im<ab+>",
)


# ---------------------------------------------------------------------------
# initial conditions and exact-state extraction

def initial_moments(params: SystemParams, qubit_level: int, cavity: CavityStateSpec) -> np.ndarray:
    """Moments of the product state |qubit_level> x |alpha, r, theta>."""
    a = cavity.alpha
    r, th = cavity.r, cavity.theta
    a2 = a * a - cmath.exp(1j * th) * math.sinh(r) * math.cosh(r)
    nph = abs(a) ** 2 + math.sinh(r) ** 2
    y = np.zeros(N_MOMENTS)
    if params.qubit_model == "ideal":
        if qubit_level not in (0, 1):
            raise ValueError("ideal qubit level must be 0 or 1")
        z = 1.0 if qubit_level == 1 else -1.0
        w = a * z
        y[:] = [a.real, a.imag, a2.real, a2.imag, nph, z,
                0.0, 0.0, w.real, w.imag, 0.0, 0.0, 0.0, 0.0]
    else:
        if not 0 <= qubit_level < params.dims.qubit_levels:
            raise ValueError("transmon level out of range")
        y[:] = [a.real, a.imag, 0.0, 0.0, a2.real, a2.imag,
                0.0, 0.0, nph, float(qubit_level), 0.0, 0.0, 0.0, 0.0]
    return y


def moments_from_state(state: JointState, params: SystemParams) -> np.ndarray:
    """Exact lab-frame moments of an interaction-picture joint state.

    Undoes the bare-Hamiltonian phases first, so the result is directly
    comparable with the moment engine's lab-frame state vector.
    """
    g = state.grid().copy()
    k, n = g.shape
    e_q = qubit_energies(params)
    t = state.time
    ph = np.exp(-1j * (e_q[:, None] + params.omega_c * np.arange(n)[None, :]) * t)
    g = ph * g
    sq = np.sqrt(np.arange(1.0, n))
    sq2 = np.sqrt(np.arange(1.0, n - 1) * np.arange(2.0, n))
    a_v = complex(np.sum(np.conj(g[:, :-1]) * sq[None, :] * g[:, 1:]))
    a2_v = complex(np.sum(np.conj(g[:, :-2]) * sq2[None, :] * g[:, 2:]))
    na_v = float(np.sum(np.abs(g) ** 2 * np.arange(n)[None, :]))
    y = np.zeros(N_MOMENTS)
    if params.qubit_model == "ideal":
        z = float(np.sum(np.abs(g[1]) ** 2 - np.abs(g[0]) ** 2))
        s = complex(np.sum(np.conj(g[0]) * g[1]))
        w = complex(
            np.sum(np.conj(g[1, :-1]) * sq * g[1, 1:])
            - np.sum(np.conj(g[0, :-1]) * sq * g[0, 1:])
        )
        u = complex(np.sum(np.conj(g[0, :-1]) * sq * g[1, 1:]))
        v = complex(np.sum(np.conj(g[1, :-1]) * sq * g[0, 1:]))
        y[:] = [a_v.real, a_v.imag, a2_v.real, a2_v.imag, na_v, z,
                s.real, s.imag, w.real, w.imag, u.real, u.imag, v.real, v.imag]
    else:
        sqb = np.sqrt(np.arange(1.0, k))
        b_v = complex(np.sum(np.conj(g[:-1]) * sqb[:, None] * g[1:]))
        sqb2 = np.sqrt(np.arange(1.0, k - 1) * np.arange(2.0, k))
        b2_v = complex(np.sum(np.conj(g[:-2]) * sqb2[:, None] * g[2:]))
        nb_v = float(np.sum(np.abs(g) ** 2 * np.arange(k)[:, None]))
        p_v = complex(
            np.sum(np.conj(g[:-1, :-1]) * sqb[:, None] * sq[None, :] * g[1:, 1:])
        )
        q_v = complex(
            np.sum(np.conj(g[1:, :-1]) * sqb[:, None] * sq[None, :] * g[:-1, 1:])
        )
        y[:] = [a_v.real, a_v.imag, b_v.real, b_v.imag, a2_v.real, a2_v.imag,
                b2_v.real, b2_v.imag, na_v, nb_v,
                p_v.real, p_v.imag, q_v.real, q_v.imag]
    return y


# ---------------------------------------------------------------------------
# reference (python) right-hand sides

def _rhs_ideal(t, y, wc, wq, g, kap, e_field):
    a = y[0] + 1j * y[1]
    a2 = y[2] + 1j * y[3]
    nph = y[4]
    z = y[5]
    s = y[6] + 1j * y[7]
    w = y[8] + 1j * y[9]
    u = y[10] + 1j * y[11]
    v = y[12] + 1j * y[13]
    sb = s.conjugate()
    ab = a.conjugate()
    aa = a * a
    # cumulant-discard closures for the third moments that appear
    a2sm = a2 * s + 2.0 * u * a - 2.0 * aa * s
    a2sp = a2 * sb + 2.0 * v * a - 2.0 * aa * sb
    nasm = nph * s + v.conjugate() * a + u * ab - 2.0 * (a * ab) * s
    nasp = nph * sb + u.conjugate() * a + v * ab - 2.0 * (a * ab) * sb
    a2z = a2 * z + 2.0 * w * a - 2.0 * aa * z
    naz = nph * z + w.conjugate() * a + w * ab - 2.0 * (a * ab) * z
    da = -1j * wc * a - 1j * g * (s + sb) - 1j * e_field - 0.5 * kap * a
    ds = -1j * wq * s + 1j * g * (w + w.conjugate())
    dz = -4.0 * g * (u.imag - v.imag)
    da2 = -2j * wc * a2 - 2j * g * (u + v) - 2j * e_field * a - kap * a2
    dn = -2.0 * g * (u.imag + v.imag) - 2.0 * (e_field.conjugate() * a).imag - kap * nph
    dw = (
        -1j * wc * w
        - 1j * e_field * z
        + 1j * g * (s - sb)
        + 2j * g * (a2sm - a2sp + nasm - nasp)
        - 0.5 * kap * w
    )
    du = (
        -1j * (wc + wq) * u
        - 1j * e_field * s
        + 1j * g * (a2z + naz - 0.5 * (1.0 - z))
        - 0.5 * kap * u
    )
    dv = (
        -1j * (wc - wq) * v
        - 1j * e_field * sb
        - 1j * g * (a2z + naz + 0.5 * (1.0 + z))
        - 0.5 * kap * v
    )
    return np.array(
        [da.real, da.imag, da2.real, da2.imag, dn, dz,
         ds.real, ds.imag, dw.real, dw.imag,
         du.real, du.imag, dv.real, dv.imag]
    )


def _rhs_transmon(t, y, wc, wq, g, kap, eps, e_field):
    a = y[0] + 1j * y[1]
    b = y[2] + 1j * y[3]
    a2 = y[4] + 1j * y[5]
    b2 = y[6] + 1j * y[7]
    na = y[8]
    nb = y[9]
    p = y[10] + 1j * y[11]
    q = y[12] + 1j * y[13]
    bb = b.conjugate()
    c1 = nb - (b * bb).real
    c2 = b2 - b * b
    c2b = b2.conjugate() - bb * bb
    cab = p - a * b
    cabd = q - a * bb
    # <b+ b b>, <b+ b^3>, <a b+ b b>, <a b+ b+ b> via cumulant discard
    bdbb = bb * b * b + 2.0 * c1 * b + c2 * bb
    bdb3 = bb * b**3 + 3.0 * c1 * b * b + 3.0 * c2 * bb * b + 3.0 * c1 * c2
    f1 = (
        a * bb * b * b + cabd * b * b + 2.0 * cab * bb * b
        + 2.0 * c1 * a * b + c2 * a * bb + cabd * c2 + 2.0 * cab * c1
    )
    f2 = (
        a * bb * bb * b + 2.0 * cabd * bb * b + cab * bb * bb
        + c2b * a * b + 2.0 * c1 * a * bb + 2.0 * cabd * c1 + cab * c2b
    )
    da = -1j * wc * a - 1j * g * (b + bb) - 1j * e_field - 0.5 * kap * a
    db = -1j * wq * b + 1j * eps * bdbb - 1j * g * (a + a.conjugate())
    da2 = -2j * wc * a2 - 2j * g * (p + q) - 2j * e_field * a - kap * a2
    db2 = -2j * wq * b2 + 1j * eps * (2.0 * bdb3 + b2) - 2j * g * (p + q.conjugate())
    dna = -2.0 * g * (p.imag + q.imag) - 2.0 * (e_field.conjugate() * a).imag - kap * na
    dnb = -2.0 * g * (p.imag - q.imag)
    dp = (
        -1j * (wc + wq) * p
        + 1j * eps * f1
        - 1j * g * (a2 + na + b2 + nb + 1.0)
        - 1j * e_field * b
        - 0.5 * kap * p
    )
    dq = (
        -1j * (wc - wq) * q
        - 1j * eps * f2
        + 1j * g * (a2 + na - nb - b2.conjugate())
        - 1j * e_field * bb
        - 0.5 * kap * q
    )
    return np.array(
        [da.real, da.imag, db.real, db.imag, da2.real, da2.imag,
         db2.real, db2.imag, dna, dnb,
         dp.real, dp.imag, dq.real, dq.imag]
    )


def derive_moment_rhs(params: SystemParams, schedule: PulseSchedule):
    """Closed-form rhs(t, y) -> dy/dt for the 14-component lab-frame vector."""
    wc, wq = params.omega_c, params.omega_q
    kap = params.kappa
    eps = params.delta_anh
    model = params.qubit_model

    def rhs(t, y):
        g = _env_scalar(schedule, params.g_max, t)
        om = _drive_scalar(schedule, t)
        e_field = om * cmath.exp(-1j * wc * t)
        if model == "ideal":
            return _rhs_ideal(t, y, wc, wq, g, kap, e_field)
        return _rhs_transmon(t, y, wc, wq, g, kap, eps, e_field)

    return rhs


# ---------------------------------------------------------------------------
# compiled kernels

# parameter vector layout shared by the kernels:
# [0]=wc [1]=wq [2]=g_max [3]=kappa [4]=eps [5]=env_kind(0 erfc,1 square,2 const)
# [6]=v1 [7]=t1 [8]=t2 [9]=has_drive [10]=g_d [11]=sigma [12]=t1_drive
# [13]=has_sustain [14]=sus_amp [15]=t_a [16]=t_b


def pack_params(params: SystemParams, schedule: PulseSchedule) -> np.ndarray:
    env = schedule.envelope
    kind = {"erfc": 0.0, "square": 1.0, "constant": 2.0}[env.kind]
    p = np.zeros(17)
    p[0] = params.omega_c
    p[1] = params.omega_q
    p[2] = params.g_max
    p[3] = params.kappa
    p[4] = params.delta_anh
    p[5] = kind
    p[6], p[7], p[8] = env.v1, env.t1, env.t2
    if schedule.drive is not None:
        p[9] = 1.0
        p[10], p[11], p[12] = schedule.drive.g_d, schedule.drive.sigma, schedule.drive.t1
    if schedule.sustain is not None:
        p[13] = 1.0
        p[14], p[15], p[16] = (
            schedule.sustain.amplitude,
            schedule.sustain.t_a,
            schedule.sustain.t_b,
        )
    return p


@njit(cache=True, inline="always")
def _env_drive_nb(p, t):
    kind = p[5]
    if kind == 0.0:
        g = 0.25 * p[2] * math.erfc(-p[6] * (t - p[7])) * math.erfc(p[6] * (t - p[8]))
    elif kind == 1.0:
        g = p[2] if p[7] <= t <= p[8] else 0.0
    else:
        g = p[2]
    om = 0.0
    if p[9] != 0.0:
        om += p[10] * math.exp(-((t - p[12]) ** 2) / (2.0 * p[11] * p[11]))
    if p[13] != 0.0 and p[15] <= t <= p[16]:
        om += p[14]
    return g, om


@njit(cache=True, fastmath=True, inline="always")
def _rhs_nb(model, t, y, p, dy, rot):
    """Moment derivatives; rot=1 steps in the bare co-rotating frame.

    In the rotating frame the state vector holds y_M e^{i phi_M t} with phi_M
    the bare phase of moment M; the linear bare-rotation terms then cancel
    exactly and the remaining derivative is rotated back term by term.  The
    solution components become slow (coupling-rate scale), which lets the
    stepper run near max_step instead of resolving w_c explicitly.
    """
    wc = p[0]
    wq = p[1]
    kap = p[3]
    eps = p[4]
    g, om = _env_drive_nb(p, t)
    pc = cmath.exp(1j * wc * t)
    pq = cmath.exp(1j * wq * t)
    e_field = om * pc.conjugate()
    if rot == 1:
        wcb = 0.0
        wqb = 0.0
    else:
        wcb = wc
        wqb = wq
    if model == 0:
        a = y[0] + 1j * y[1]
        a2 = y[2] + 1j * y[3]
        nph = y[4]
        z = y[5]
        s = y[6] + 1j * y[7]
        w = y[8] + 1j * y[9]
        u = y[10] + 1j * y[11]
        v = y[12] + 1j * y[13]
        if rot == 1:
            ph_a = pc
            ph_a2 = pc * pc
            ph_s = pq
            ph_u = pc * pq
            ph_v = pc * pq.conjugate()
            a = ph_a.conjugate() * a
            a2 = ph_a2.conjugate() * a2
            s = ph_s.conjugate() * s
            w = ph_a.conjugate() * w
            u = ph_u.conjugate() * u
            v = ph_v.conjugate() * v
        sb = s.conjugate()
        ab = a.conjugate()
        aa = a * a
        a2sm = a2 * s + 2.0 * u * a - 2.0 * aa * s
        a2sp = a2 * sb + 2.0 * v * a - 2.0 * aa * sb
        nasm = nph * s + v.conjugate() * a + u * ab - 2.0 * (a * ab) * s
        nasp = nph * sb + u.conjugate() * a + v * ab - 2.0 * (a * ab) * sb
        a2z = a2 * z + 2.0 * w * a - 2.0 * aa * z
        naz = nph * z + w.conjugate() * a + w * ab - 2.0 * (a * ab) * z
        da = -1j * wcb * a - 1j * g * (s + sb) - 1j * e_field - 0.5 * kap * a
        ds = -1j * wqb * s + 1j * g * (w + w.conjugate())
        dz = -4.0 * g * (u.imag - v.imag)
        da2 = -2j * wcb * a2 - 2j * g * (u + v) - 2j * e_field * a - kap * a2
        dn = -2.0 * g * (u.imag + v.imag) - 2.0 * (e_field.conjugate() * a).imag - kap * nph
        dw = (
            -1j * wcb * w
            - 1j * e_field * z
            + 1j * g * (s - sb)
            + 2j * g * (a2sm - a2sp + nasm - nasp)
            - 0.5 * kap * w
        )
        du = (
            -1j * (wcb + wqb) * u
            - 1j * e_field * s
            + 1j * g * (a2z + naz - 0.5 * (1.0 - z))
            - 0.5 * kap * u
        )
        dv = (
            -1j * (wcb - wqb) * v
            - 1j * e_field * sb
            - 1j * g * (a2z + naz + 0.5 * (1.0 + z))
            - 0.5 * kap * v
        )
        if rot == 1:
            da = ph_a * da
            da2 = ph_a2 * da2
            ds = ph_s * ds
            dw = ph_a * dw
            du = ph_u * du
            dv = ph_v * dv
        dy[0] = da.real
        dy[1] = da.imag
        dy[2] = da2.real
        dy[3] = da2.imag
        dy[4] = dn
        dy[5] = dz
        dy[6] = ds.real
        dy[7] = ds.imag
        dy[8] = dw.real
        dy[9] = dw.imag
        dy[10] = du.real
        dy[11] = du.imag
        dy[12] = dv.real
        dy[13] = dv.imag
    else:
        a = y[0] + 1j * y[1]
        b = y[2] + 1j * y[3]
        a2 = y[4] + 1j * y[5]
        b2 = y[6] + 1j * y[7]
        na = y[8]
        nb = y[9]
        pp = y[10] + 1j * y[11]
        qq = y[12] + 1j * y[13]
        if rot == 1:
            ph_a = pc
            ph_b = pq
            ph_a2 = pc * pc
            ph_b2 = pq * pq
            ph_p = pc * pq
            ph_q = pc * pq.conjugate()
            a = ph_a.conjugate() * a
            b = ph_b.conjugate() * b
            a2 = ph_a2.conjugate() * a2
            b2 = ph_b2.conjugate() * b2
            pp = ph_p.conjugate() * pp
            qq = ph_q.conjugate() * qq
        bb = b.conjugate()
        c1 = nb - (b * bb).real
        c2 = b2 - b * b
        c2b = b2.conjugate() - bb * bb
        cab = pp - a * b
        cabd = qq - a * bb
        bdbb = bb * b * b + 2.0 * c1 * b + c2 * bb
        bdb3 = bb * b * b * b + 3.0 * c1 * b * b + 3.0 * c2 * bb * b + 3.0 * c1 * c2
        f1 = (
            a * bb * b * b + cabd * b * b + 2.0 * cab * bb * b
            + 2.0 * c1 * a * b + c2 * a * bb + cabd * c2 + 2.0 * cab * c1
        )
        f2 = (
            a * bb * bb * b + 2.0 * cabd * bb * b + cab * bb * bb
            + c2b * a * b + 2.0 * c1 * a * bb + 2.0 * cabd * c1 + cab * c2b
        )
        da = -1j * wcb * a - 1j * g * (b + bb) - 1j * e_field - 0.5 * kap * a
        db = -1j * wqb * b + 1j * eps * bdbb - 1j * g * (a + a.conjugate())
        da2 = -2j * wcb * a2 - 2j * g * (pp + qq) - 2j * e_field * a - kap * a2
        db2 = -2j * wqb * b2 + 1j * eps * (2.0 * bdb3 + b2) - 2j * g * (pp + qq.conjugate())
        dna = -2.0 * g * (pp.imag + qq.imag) - 2.0 * (e_field.conjugate() * a).imag - kap * na
        dnb = -2.0 * g * (pp.imag - qq.imag)
        dp = (
            -1j * (wcb + wqb) * pp
            + 1j * eps * f1
            - 1j * g * (a2 + na + b2 + nb + 1.0)
            - 1j * e_field * b
            - 0.5 * kap * pp
        )
        dq = (
            -1j * (wcb - wqb) * qq
            - 1j * eps * f2
            + 1j * g * (a2 + na - nb - b2.conjugate())
            - 1j * e_field * bb
            - 0.5 * kap * qq
        )
        if rot == 1:
            da = ph_a * da
            db = ph_b * db
            da2 = ph_a2 * da2
            db2 = ph_b2 * db2
            dp = ph_p * dp
            dq = ph_q * dq
        dy[0] = da.real
        dy[1] = da.imag
        dy[2] = db.real
        dy[3] = db.imag
        dy[4] = da2.real
        dy[5] = da2.imag
        dy[6] = db2.real
        dy[7] = db2.imag
        dy[8] = dna
        dy[9] = dnb
        dy[10] = dp.real
        dy[11] = dp.imag
        dy[12] = dq.real
        dy[13] = dq.imag


@njit(cache=True)
def _dp45_nb(model, y0, t_eval, p, rtol, atol, hmax):
    """Dormand-Prince 5(4) with standard step control, landing on t_eval."""
    nt = t_eval.shape[0]
    ny = y0.shape[0]
    out = np.empty((nt, ny))
    out[0] = y0
    y = y0.copy()
    t = t_eval[0]
    h = hmax
    nfev = 0
    k1 = np.empty(ny)
    k2 = np.empty(ny)
    k3 = np.empty(ny)
    k4 = np.empty(ny)
    k5 = np.empty(ny)
    k6 = np.empty(ny)
    k7 = np.empty(ny)
    ys = np.empty(ny)
    ynew = np.empty(ny)
    status = 0
    for i in range(1, nt):
        t_end = t_eval[i]
        while t < t_end - 1e-14:
            if h > t_end - t:
                h = t_end - t
            if h > hmax:
                h = hmax
            _rhs_nb(model, t, y, p, k1, 1)
            for j in range(ny):
                ys[j] = y[j] + h * 0.2 * k1[j]
            _rhs_nb(model, t + 0.2 * h, ys, p, k2, 1)
            for j in range(ny):
                ys[j] = y[j] + h * (0.075 * k1[j] + 0.225 * k2[j])
            _rhs_nb(model, t + 0.3 * h, ys, p, k3, 1)
            for j in range(ny):
                ys[j] = y[j] + h * (
                    (44.0 / 45.0) * k1[j] - (56.0 / 15.0) * k2[j] + (32.0 / 9.0) * k3[j]
                )
            _rhs_nb(model, t + 0.8 * h, ys, p, k4, 1)
            for j in range(ny):
                ys[j] = y[j] + h * (
                    (19372.0 / 6561.0) * k1[j]
                    - (25360.0 / 2187.0) * k2[j]
                    + (64448.0 / 6561.0) * k3[j]
                    - (212.0 / 729.0) * k4[j]
                )
            _rhs_nb(model, t + (8.0 / 9.0) * h, ys, p, k5, 1)
            for j in range(ny):
                ys[j] = y[j] + h * (
                    (9017.0 / 3168.0) * k1[j]
                    - (355.0 / 33.0) * k2[j]
                    + (46732.0 / 5247.0) * k3[j]
                    + (49.0 / 176.0) * k4[j]
                    - (5103.0 / 18656.0) * k5[j]
                )
            _rhs_nb(model, t + h, ys, p, k6, 1)
            for j in range(ny):
                ynew[j] = y[j] + h * (
                    (35.0 / 384.0) * k1[j]
                    + (500.0 / 1113.0) * k3[j]
                    + (125.0 / 192.0) * k4[j]
                    - (2187.0 / 6784.0) * k5[j]
                    + (11.0 / 84.0) * k6[j]
                )
            _rhs_nb(model, t + h, ynew, p, k7, 1)
            nfev += 7
            err = 0.0
            for j in range(ny):
                ev = h * (
                    (35.0 / 384.0 - 5179.0 / 57600.0) * k1[j]
                    + (500.0 / 1113.0 - 7571.0 / 16695.0) * k3[j]
                    + (125.0 / 192.0 - 393.0 / 640.0) * k4[j]
                    + (-2187.0 / 6784.0 + 92097.0 / 339200.0) * k5[j]
                    + (11.0 / 84.0 - 187.0 / 2100.0) * k6[j]
                    - (1.0 / 40.0) * k7[j]
                )
                sc = atol + rtol * max(abs(y[j]), abs(ynew[j]))
                e = ev / sc
                err += e * e
            err = math.sqrt(err / ny)
            if err <= 1.0:
                t = t + h
                for j in range(ny):
                    y[j] = ynew[j]
                fac = 5.0 if err == 0.0 else 0.9 * err ** (-0.2)
                if fac > 5.0:
                    fac = 5.0
                h = h * fac
            else:
                fac = 0.9 * err ** (-0.2)
                if fac < 0.2:
                    fac = 0.2
                h = h * fac
            if h < 1e-13:
                status = 1
                out[i] = y
                return out, nfev, status
        out[i] = y
        t = t_end
    return out, nfev, status


# ---------------------------------------------------------------------------
# driver

def _pair_rates(params: SystemParams):
    """(first real index, bare phase rate) for each complex moment pair."""
    wc, wq = params.omega_c, params.omega_q
    if params.qubit_model == "ideal":
        return ((0, wc), (2, 2 * wc), (6, wq), (8, wc), (10, wc + wq), (12, wc - wq))
    return ((0, wc), (2, wq), (4, 2 * wc), (6, 2 * wq), (10, wc + wq), (12, wc - wq))


def _rotate_rows(out: np.ndarray, params: SystemParams, times, sign: int) -> None:
    """Multiply each complex pair by e^{i sign rate t}, in place (rows = times)."""
    tvec = np.atleast_1d(np.asarray(times, dtype=float))
    for i0, rate in _pair_rates(params):
        ph = np.exp(1j * sign * rate * tvec)
        c = (out[:, i0] + 1j * out[:, i0 + 1]) * ph
        out[:, i0] = c.real
        out[:, i0 + 1] = c.imag


def evolve_moments(
    initial: np.ndarray,
    params: SystemParams,
    schedule: PulseSchedule,
    span,
    cfg: Optional[IntegratorConfig] = None,
) -> Trajectory:
    """Integrate the 14-component moment vector over span (lab frame).

    Returns a Trajectory of kind "moments" whose states are the raw vectors
    and whose observables hold rotating-frame series ("a", "a2", "n", plus
    "sigma_z" for the ideal qubit or "nb" for the transmon).  Moment-domain
    invariant violations (negative occupations, |<s_z>| > 1) warn rather than
    raise; clamping is left to optimization objectives.
    """
    cfg = cfg or IntegratorConfig()
    t0, t1 = float(span[0]), float(span[1])
    if not t1 > t0:
        raise ValueError("span must satisfy t1 > t0")
    y0 = np.asarray(initial, dtype=float)
    if y0.shape != (N_MOMENTS,):
        raise ValueError(f"moment vector must have shape ({N_MOMENTS},)")
    hmax = cfg.max_step if cfg.max_step is not None else default_max_step(params)
    t_eval = np.linspace(t0, t1, cfg.samples)
    model = 0 if params.qubit_model == "ideal" else 1
    # step in the co-rotating frame (slow components), report lab-frame rows
    y0rot = y0.reshape(1, -1).copy()
    _rotate_rows(y0rot, params, [t0], +1)
    y0rot = y0rot[0]
    wall = time.perf_counter()
    if cfg.method == "adaptive_rk":
        p = pack_params(params, schedule)
        out, nfev, status = _dp45_nb(model, y0rot, t_eval, p, cfg.rel_tol, cfg.abs_tol, hmax)
        if status != 0:
            raise IntegrationError("moment integration step size underflow")
    else:
        lab_rhs = derive_moment_rhs(params, schedule)
        pairs = _pair_rates(params)

        def rhs(t, yt):
            y_lab = yt.copy().reshape(1, -1)
            _rotate_rows(y_lab, params, [t], -1)
            y_lab = y_lab[0]
            d = lab_rhs(t, y_lab)
            for i0, rate in pairs:
                dc = (d[i0] + 1j * d[i0 + 1]) + 1j * rate * (y_lab[i0] + 1j * y_lab[i0 + 1])
                dc *= cmath.exp(1j * rate * t)
                d[i0], d[i0 + 1] = dc.real, dc.imag
            return d

        nfev = 0
        out = np.empty((len(t_eval), N_MOMENTS))
        out[0] = y0rot
        y = y0rot.copy()
        for i in range(len(t_eval) - 1):
            ta, tb = t_eval[i], t_eval[i + 1]
            nst = max(1, int(math.ceil((tb - ta) / hmax - 1e-12)))
            dt = (tb - ta) / nst
            for j in range(nst):
                tj = ta + j * dt
                k1 = rhs(tj, y)
                k2 = rhs(tj + 0.5 * dt, y + 0.5 * dt * k1)
                k3 = rhs(tj + 0.5 * dt, y + 0.5 * dt * k2)
                k4 = rhs(tj + dt, y + dt * k3)
                y = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
                nfev += 4
            out[i + 1] = y
    wall = time.perf_counter() - wall
    _rotate_rows(out, params, t_eval, -1)

    _warn_moment_invariants(out, params)
    traj = Trajectory(
        times=t_eval,
        states=[out[i] for i in range(out.shape[0])],
        kind="moments",
        meta={
            "nfev": int(nfev),
            "method": cfg.method,
            "model": params.qubit_model,
            "engine": "moments",
            "compiled": HAVE_NUMBA and cfg.method == "adaptive_rk",
            "wall_s": wall,
        },
    )
    traj.observables.update(moment_observables(out, params, t_eval))
    return traj


def _warn_moment_invariants(out, params):
    tol = 1e-6
    if params.qubit_model == "ideal":
        nmin = out[:, 4].min()
        zmax = np.abs(out[:, 5]).max()
        if nmin < -tol:
            warnings.warn(f"moment closure drove <a+a> to {nmin:.3e}", RuntimeWarning)
        if zmax > 1.0 + tol:
            warnings.warn(f"moment closure drove |<s_z>| to {zmax:.6f}", RuntimeWarning)
    else:
        if out[:, 8].min() < -tol:
            warnings.warn(
                f"moment closure drove <a+a> to {out[:, 8].min():.3e}", RuntimeWarning
            )
        if out[:, 9].min() < -tol:
            warnings.warn(
                f"moment closure drove <b+b> to {out[:, 9].min():.3e}", RuntimeWarning
            )


def moment_observables(out: np.ndarray, params: SystemParams, times: np.ndarray) -> dict:
    """Rotating-frame observable series from lab-frame moment rows."""
    ph = np.exp(1j * params.omega_c * times)
    a_lab = out[:, 0] + 1j * out[:, 1]
    if params.qubit_model == "ideal":
        a2_lab = out[:, 2] + 1j * out[:, 3]
        obs = {
            "a": a_lab * ph,
            "a2": a2_lab * ph**2,
            "n": out[:, 4].copy(),
            "sigma_z": out[:, 5].copy(),
        }
    else:
        a2_lab = out[:, 4] + 1j * out[:, 5]
        obs = {
            "a": a_lab * ph,
            "a2": a2_lab * ph**2,
            "n": out[:, 8].copy(),
            "nb": out[:, 9].copy(),
        }
    return obs


def closure_error_report(moment_traj: Trajectory, exact_traj: Trajectory) -> dict:
    """Deviation of the closed <a> trajectory from the exact one.

    Both trajectories must be sampled on the same time grid and report "a"
    in the same (rotating) frame; the exact side is computed on demand.
    """
    if moment_traj.kind != "moments":
        raise ValueError("first argument must be a moment trajectory")
    if exact_traj.kind not in ("pure", "density"):
        raise ValueError("second argument must be a state trajectory")
    if len(moment_traj.times) != len(exact_traj.times) or not np.allclose(
        moment_traj.times, exact_traj.times, atol=1e-12, rtol=0.0
    ):
        raise ValueError("trajectories must share one sample grid")
    a_m = np.asarray(moment_traj.observables["a"])
    if "a" not in exact_traj.observables:
        from .integrate import observables_series

        observables_series(exact_traj, ["a"])
    a_e = np.asarray(exact_traj.observables["a"])
    dev = np.abs(a_m - a_e)
    scale = float(np.max(np.abs(a_e)))
    return {
        "max_abs_dev": float(dev.max()),
        "rms_dev": float(np.sqrt(np.mean(dev**2))),
        "final_centroid_distance": float(dev[-1]),
        "scale": scale,
    }
