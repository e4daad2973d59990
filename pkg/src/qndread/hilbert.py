"""Truncated Fock-space and multi-level-qubit linear algebra.

Conventions used throughout the package:

* Joint basis ordering is qubit-major: basis index = q * cavity_cutoff + n,
  so a joint amplitude vector reshapes to (qubit_levels, cavity_cutoff).
* The qubit ground state |0> is the lower energy eigenstate and <sigma_z> = +1
  for the excited state |1>.
* Squeezed coherent states are displacement-after-squeeze, D(alpha) S(xi) |0>
  with xi = r e^{i theta}.  Under this ordering <a> = alpha for every r, so a
  quoted amplitude |<a>| pins alpha directly.
* On the truncated space [a, a+] = I everywhere except the top Fock level,
  where the diagonal entry is 1 - N instead of 1 (the a+ a term cannot reach
  |N>).  States must therefore keep the top levels empty; see TruncationError.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import expm_multiply


class TruncationError(RuntimeError):
    """Raised when state weight reaches the Fock-space truncation boundary."""


@dataclass(frozen=True)
class HilbertDims:
    """Dimensions of the joint qubit x cavity space."""

    qubit_levels: int
    cavity_cutoff: int

    def __post_init__(self):
        if self.qubit_levels < 2:
            raise ValueError("qubit_levels must be >= 2")
        if self.cavity_cutoff < 2:
            raise ValueError("cavity_cutoff must be >= 2")

    @property
    def joint_dim(self) -> int:
        return self.qubit_levels * self.cavity_cutoff


@dataclass
class JointState:
    """Pure joint state over the qubit-major basis."""

    amplitudes: np.ndarray
    dims: HilbertDims
    time: float = 0.0

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)
        if self.amplitudes.shape != (self.dims.joint_dim,):
            raise ValueError("amplitude vector does not match dims")

    def grid(self) -> np.ndarray:
        """View as (qubit_levels, cavity_cutoff)."""
        return self.amplitudes.reshape(self.dims.qubit_levels, self.dims.cavity_cutoff)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def top_fock_population(self, levels: int = 2) -> float:
        """Summed population of the top `levels` Fock levels (all qubit rows)."""
        g = self.grid()
        return float(np.sum(np.abs(g[:, -levels:]) ** 2))

    def require_in_truncation(self, leak_tol: float = 1e-6, levels: int = 2):
        leak = self.top_fock_population(levels)
        if leak >= leak_tol:
            raise TruncationError(
                f"top-{levels} Fock population {leak:.3e} >= {leak_tol:.1e} "
                f"at t={self.time:g} ns; raise cavity_cutoff"
            )


@dataclass
class DensityState:
    """Density matrix over the joint (or a reduced) basis."""

    matrix: np.ndarray
    dims: HilbertDims
    time: float = 0.0

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=complex)
        n = self.matrix.shape[0]
        if self.matrix.shape != (n, n):
            raise ValueError("density matrix must be square")

    def validate(self, herm_tol=1e-10, trace_tol=1e-8, eig_floor=-1e-8):
        m = self.matrix
        if np.max(np.abs(m - m.conj().T)) > herm_tol * max(1.0, np.max(np.abs(m))):
            raise ValueError("density matrix not Hermitian within tolerance")
        if abs(np.trace(m).real - 1.0) > trace_tol:
            raise ValueError("density matrix trace differs from 1")
        w = np.linalg.eigvalsh(0.5 * (m + m.conj().T))
        if w.min() < eig_floor:
            raise ValueError(f"density matrix eigenvalue {w.min():.2e} below floor")


@dataclass(frozen=True)
class CavityStateSpec:
    """Cavity preparation: coherent amplitude alpha, squeezing r at angle theta."""

    alpha: complex
    r: float = 0.0
    theta: float = 0.0

    def __post_init__(self):
        if self.r < 0:
            raise ValueError("squeezing magnitude r must be >= 0")

    @property
    def mean_photons(self) -> float:
        return abs(self.alpha) ** 2 + math.sinh(self.r) ** 2


def default_cutoff(spec: CavityStateSpec) -> int:
    """Default Fock truncation for a cavity preparation.

    ceil(|alpha|^2 + 8 |alpha| e^r + 25): mean photon number plus a margin of
    eight amplitude-scaled standard deviations widened by the squeeze factor.
    Generous enough that the top two Fock levels stay below 1e-6 for every
    protocol in scope; the integrator asserts that at run time.
    """
    a = abs(spec.alpha)
    return int(math.ceil(a * a + 8.0 * a * math.exp(spec.r) + 25.0))


def annihilation_op(dims: HilbertDims, subsystem: str) -> np.ndarray:
    """Truncated ladder operator of one subsystem (local matrix, not embedded).

    Parameters
    ----------
    dims : HilbertDims
    subsystem : {"qubit", "cavity"}
        For a 2-level qubit this is sigma_minus.

    Returns
    -------
    (n, n) complex ndarray with <m-1| a |m> = sqrt(m).
    """
    if subsystem == "qubit":
        n = dims.qubit_levels
    elif subsystem == "cavity":
        n = dims.cavity_cutoff
    else:
        raise ValueError(f"unknown subsystem {subsystem!r}")
    return np.diag(np.sqrt(np.arange(1, n, dtype=float)), 1).astype(complex)


def coherent_state(alpha: complex, cutoff: int) -> np.ndarray:
    """Normalized coherent state |alpha> in a truncated Fock basis.

    Amplitudes are built by the stable recursion c_{n+1} = c_n alpha/sqrt(n+1)
    from c_0 = exp(-|alpha|^2/2).  The truncated tail mass must be < 1e-10;
    the vector is renormalized after truncation.
    """
    alpha = complex(alpha)
    c = np.zeros(cutoff, dtype=complex)
    c[0] = math.exp(-abs(alpha) ** 2 / 2.0)
    for n in range(cutoff - 1):
        c[n + 1] = c[n] * alpha / math.sqrt(n + 1)
    mass = float(np.sum(np.abs(c) ** 2))
    if 1.0 - mass > 1e-10:
        raise TruncationError(
            f"coherent state alpha={alpha:g} loses {1.0 - mass:.2e} mass at cutoff {cutoff}"
        )
    return c / math.sqrt(mass)


def squeezed_coherent_state(spec: CavityStateSpec, cutoff: int) -> np.ndarray:
    """Normalized squeezed coherent state D(alpha) S(xi) |0>, xi = r e^{i theta}.

    The squeeze and displacement operators act as matrix exponentials on an
    internally enlarged space (+25 percent) to push truncation artifacts past
    the returned cutoff, then the vector is truncated and renormalized.
    """
    if spec.r == 0.0:
        return coherent_state(spec.alpha, cutoff)
    big = int(math.ceil(1.25 * cutoff))
    a = sp.diags(np.sqrt(np.arange(1, big, dtype=float)), 1, format="csc").astype(complex)
    adag = a.T.conj().tocsc()
    xi = spec.r * np.exp(1j * spec.theta)
    vac = np.zeros(big, dtype=complex)
    vac[0] = 1.0
    # S(xi) = exp((xi* a^2 - xi a+^2)/2), then D(alpha) = exp(alpha a+ - alpha* a)
    sq = expm_multiply(0.5 * (np.conj(xi) * (a @ a) - xi * (adag @ adag)), vac)
    alpha = complex(spec.alpha)
    disp = expm_multiply(alpha * adag - np.conj(alpha) * a, sq)
    c = disp[:cutoff]
    mass = float(np.sum(np.abs(c) ** 2))
    if 1.0 - mass > 1e-10:
        raise TruncationError(
            f"squeezed state (alpha={alpha:g}, r={spec.r:g}) loses "
            f"{1.0 - mass:.2e} mass at cutoff {cutoff}"
        )
    return c / math.sqrt(mass)


def tensor_state(qubit_state: np.ndarray, cavity_state: np.ndarray, time: float = 0.0) -> JointState:
    """Joint product state with qubit-major index ordering."""
    q = np.asarray(qubit_state, dtype=complex)
    c = np.asarray(cavity_state, dtype=complex)
    dims = HilbertDims(qubit_levels=q.size, cavity_cutoff=c.size)
    return JointState(np.kron(q, c), dims, time=time)


def partial_trace(state, keep: str) -> DensityState:
    """Reduced density matrix of one subsystem.

    Parameters
    ----------
    state : JointState or DensityState
    keep : {"qubit", "cavity"}
    """
    dims = state.dims
    k, n = dims.qubit_levels, dims.cavity_cutoff
    if isinstance(state, JointState):
        psi = state.grid()
        if keep == "qubit":
            red = psi @ psi.conj().T
        elif keep == "cavity":
            red = psi.T @ psi.conj()
        else:
            raise ValueError(f"unknown subsystem {keep!r}")
    elif isinstance(state, DensityState):
        rho = state.matrix.reshape(k, n, k, n)
        if keep == "qubit":
            red = np.einsum("injn->ij", rho)
        elif keep == "cavity":
            red = np.einsum("inim->nm", rho)
        else:
            raise ValueError(f"unknown subsystem {keep!r}")
    else:
        raise TypeError("state must be JointState or DensityState")
    return DensityState(red, dims, time=state.time)


def matrix_sqrt_psd(m: np.ndarray, herm_tol: float = 1e-8, neg_floor: float = -1e-8) -> np.ndarray:
    """Principal square root of a Hermitian positive-semidefinite matrix.

    Eigenvalues in [neg_floor, 0) are clipped to zero (round-off from partial
    traces); anything below neg_floor is a genuine error, not silently fixed.
    """
    m = np.asarray(m, dtype=complex)
    scale = max(1.0, float(np.max(np.abs(m))))
    if np.max(np.abs(m - m.conj().T)) > herm_tol * scale:
        raise ValueError("matrix_sqrt_psd requires a Hermitian input")
    w, v = np.linalg.eigh(0.5 * (m + m.conj().T))
    if w.min() < neg_floor * scale:
        raise ValueError(f"eigenvalue {w.min():.3e} below PSD floor")
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.conj().T
