"""Choi matrices of the reduced two-atom dynamics and the linear algebra around them.

The map acts on the effective three-level space ``{|+>, |->, |00>}`` (index
0, 1, 2) and is fixed by the two channel amplitudes: coherences between
levels ``j, k`` scale by ``a_j conj(a_k)`` with ``a = (r1, r2, 1)`` and the
population lost from ``|+>`` or ``|->`` reappears in ``|00>``.  Choi matrices
are ``(E x I)|Phi><Phi|`` with ``|Phi> = N**-1/2 sum_n |n>|n>`` and index
``N*system + ancilla``.  The single-atom channel is the same construction with
levels ``{|e>, |g>}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .errors import NotHermitian, NotPSD, SingularIntermediateMap
from .model import CavityParams

HERMITIAN_TOL = 1e-10
EIG_CUT = 1e-14
PSD_TOL = 1e-8
SINGULAR_TOL = 1e-9
RICHARDSON_EPS = (1e-2, 1e-3, 1e-4)


@dataclass(frozen=True)
class ChannelSnapshot:
    """Amplitudes ``r1`` (symmetric) and ``r2`` (antisymmetric) at time ``t``."""

    r1: complex
    r2: complex
    t: float = 0.0

    @property
    def amplitudes(self):
        return (complex(self.r1), complex(self.r2))


@dataclass(frozen=True)
class AtomSnapshot:
    """Excited-state amplitude ``r`` of a single atom at time ``t``."""

    r: complex
    t: float = 0.0

    @property
    def amplitudes(self):
        return (complex(self.r),)


@dataclass(frozen=True, eq=False)
class ChoiMatrix:
    """``dim**2 x dim**2`` Choi matrix of a map on a ``dim``-level system."""

    dim: int
    entries: np.ndarray
    label: str = ""

    @property
    def trace(self) -> complex:
        return complex(np.trace(self.entries))


def _choi_from_amplitudes(amps, populations, label):
    """Excited levels ``0..k-1`` with coherence factors ``amps`` and surviving
    populations ``populations``; level ``k`` is the ground state."""
    k = len(amps)
    n = k + 1
    a = np.array(list(amps) + [1.0], dtype=complex)
    psi = np.zeros(n * n, dtype=complex)
    for j in range(n):
        psi[j * n + j] = a[j]
    M = np.outer(psi, psi.conj())
    for j in range(k):
        # the |j><j| -> |g><g| leakage, attached to ancilla j
        M[k * n + j, k * n + j] += 1.0 - populations[j]
    return ChoiMatrix(n, M / n, label)


def choi(ch) -> ChoiMatrix:
    """Choi matrix of ``E_(t,0)`` for a :class:`ChannelSnapshot` or
    :class:`AtomSnapshot`."""
    amps = ch.amplitudes
    pops = [abs(x) ** 2 for x in amps]
    return _choi_from_amplitudes(amps, pops, f"choi(t={ch.t})")


def intermediate_choi(later, earlier) -> ChoiMatrix:
    """Choi matrix of ``E_(t,s)`` built from the amplitude ratios.

    Populations scale by ``|r(t)|**2/|r(s)|**2``; a ratio above one produces a
    negative leakage entry, which is how non-divisibility shows up.
    """
    if type(later) is not type(earlier):
        raise TypeError("snapshots must describe the same kind of channel")
    if later.t < earlier.t:
        raise ValueError("later.t must not precede earlier.t")
    num, den = later.amplitudes, earlier.amplitudes
    for x in den:
        if abs(x) < SINGULAR_TOL:
            raise SingularIntermediateMap(
                f"amplitude {abs(x):.3g} at s={earlier.t} is below {SINGULAR_TOL}; E_(s,0) is not invertible"
            )
    ratios = [a / b for a, b in zip(num, den)]
    pops = [abs(x) ** 2 for x in ratios]
    return _choi_from_amplitudes(ratios, pops, f"intermediate(t={later.t}, s={earlier.t})")


def choi_asymptotic(p: CavityParams) -> ChoiMatrix:
    """Long-time limit of ``E_(t,0)``.

    Every channel relaxes for ``d > 0``.  At ``d = 0`` the antisymmetric state is
    dark and keeps its amplitude, so the limit (and hence the time average)
    is the ``r1 = 0, r2 = 1`` map.
    """
    if p.d == 0:
        return choi(ChannelSnapshot(0.0, 1.0, math.inf))
    return choi(ChannelSnapshot(0.0, 0.0, math.inf))


def kron(A: ChoiMatrix, B: ChoiMatrix, reorder: bool = False) -> ChoiMatrix:
    """Choi matrix of the product map.

    The plain Kronecker product is ordered ``sysA, ancA, sysB, ancB``.  With
    ``reorder=True`` it is permuted to ``(sysA sysB) x (ancA ancB)`` so the
    result is again in ``N*system + ancilla`` form.  Trace norms and fidelities
    are invariant under this permutation.
    """
    M = np.kron(A.entries, B.entries)
    if reorder:
        na, nb = A.dim, B.dim
        idx = np.arange(na * na * nb * nb).reshape(na, na, nb, nb).transpose(0, 2, 1, 3).ravel()
        M = M[np.ix_(idx, idx)]
    return ChoiMatrix(A.dim * B.dim, M, f"{A.label} (x) {B.label}")


# --------------------------------------------------------------------------
# Hermitian eigensolver


@numba.njit(cache=True)
def _jacobi(A, V):
    n = A.shape[0]
    norm = 0.0
    for i in range(n):
        for j in range(n):
            norm += abs(A[i, j]) ** 2
    norm = math.sqrt(norm)
    if norm == 0.0:
        return
    for sweep in range(100):
        off = 0.0
        for i in range(n):
            for j in range(i + 1, n):
                off += abs(A[i, j]) ** 2
        if math.sqrt(off) <= 1e-17 * norm:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                mag = abs(apq)
                if mag <= 1e-300:
                    continue
                w = apq / mag
                wc = w.conjugate()
                tau = (A[q, q].real - A[p, p].real) / (2.0 * mag)
                if tau >= 0:
                    t = 1.0 / (tau + math.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + math.sqrt(1.0 + tau * tau))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                for k in range(n):
                    akp = A[k, p]
                    akq = A[k, q]
                    A[k, p] = c * akp - s * wc * akq
                    A[k, q] = s * akp + c * wc * akq
                for k in range(n):
                    apk = A[p, k]
                    aqk = A[q, k]
                    A[p, k] = c * apk - s * w * aqk
                    A[q, k] = s * apk + c * w * aqk
                for k in range(n):
                    vkp = V[k, p]
                    vkq = V[k, q]
                    V[k, p] = c * vkp - s * wc * vkq
                    V[k, q] = s * vkp + c * wc * vkq
                A[p, q] = 0.0
                A[q, p] = 0.0
                A[p, p] = A[p, p].real
                A[q, q] = A[q, q].real


@numba.njit(cache=True)
def _eigh(M):
    n = M.shape[0]
    A = M.copy()
    V = np.eye(n, dtype=np.complex128)
    _jacobi(A, V)
    ev = np.empty(n)
    for i in range(n):
        ev[i] = A[i, i].real
    order = np.argsort(ev)
    return ev[order], V[:, order]


def _as_array(M):
    return M.entries if isinstance(M, ChoiMatrix) else np.asarray(M, dtype=complex)


def hermitian_eigs(M):
    """Ascending eigenvalues and orthonormal eigenvectors by cyclic Jacobi."""
    A = np.ascontiguousarray(_as_array(M), dtype=np.complex128)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise NotHermitian("matrix must be square")
    scale = max(1.0, float(np.max(np.abs(A))) if A.size else 1.0)
    if np.max(np.abs(A - A.conj().T), initial=0.0) > HERMITIAN_TOL * scale:
        raise NotHermitian("matrix is not Hermitian within tolerance")
    A = 0.5 * (A + A.conj().T)
    return _eigh(A)


def trace_norm(M) -> float:
    """Sum of absolute eigenvalues of a Hermitian matrix."""
    ev, _ = hermitian_eigs(M)
    return float(np.sum(np.abs(ev)))


def _sqrt_psd(A):
    ev, V = hermitian_eigs(A)
    if ev[0] < -PSD_TOL:
        raise NotPSD(f"minimum eigenvalue {ev[0]:.3g}")
    # eigenvalues at round-off level are zeros; their square roots would
    # otherwise inject ~1e-8 noise
    ev = np.where(ev > EIG_CUT * max(ev[-1], 0.0), ev, 0.0)
    return (V * np.sqrt(ev)) @ V.conj().T


def fidelity(A, B) -> float:
    """Uhlmann fidelity ``||sqrt(A) sqrt(B)||_1**2``."""
    sa = _sqrt_psd(_as_array(A))
    sb = _sqrt_psd(_as_array(B))
    s = np.linalg.svd(sa @ sb, compute_uv=False)
    return float(min(1.0, np.sum(s) ** 2))


@numba.njit(cache=True)
def _fidelity_batch(sb, stack):
    out = np.empty(stack.shape[0])
    for i in range(stack.shape[0]):
        ev, V = _eigh(stack[i])
        top = max(ev[-1], 0.0)
        for j in range(ev.size):
            ev[j] = math.sqrt(ev[j]) if ev[j] > EIG_CUT * top else 0.0
        sa = (V * ev) @ V.conj().T
        s = np.linalg.svd(sa @ sb)[1]
        acc = s.sum()
        out[i] = acc * acc
    return out


def fidelity_series(snapshots, reference: ChoiMatrix) -> np.ndarray:
    """Fidelity of each snapshot's Choi matrix with a fixed reference."""
    sb = np.ascontiguousarray(_sqrt_psd(reference.entries))
    stack = np.ascontiguousarray(np.stack([choi(s).entries for s in snapshots]))
    return np.minimum(_fidelity_batch(sb, stack), 1.0)


# --------------------------------------------------------------------------
# finite-difference g


def g_numeric(earlier, later) -> float:
    """``(||Upsilon_(t+eps, t)||_1 - 1)/eps`` with ``eps = later.t - earlier.t``."""
    eps = later.t - earlier.t
    if not eps > 0:
        raise ValueError("later snapshot must be strictly after the earlier one")
    return (trace_norm(intermediate_choi(later, earlier)) - 1.0) / eps


def g_numeric_extrapolated(snapshot_at, t: float, eps=RICHARDSON_EPS) -> float:
    """Polynomial extrapolation of :func:`g_numeric` to ``eps -> 0``.

    ``snapshot_at(t)`` must return a snapshot at arbitrary time.  The forward
    difference has an expansion in integer powers of ``eps``, so Neville's
    scheme on the given step sizes removes the leading bias terms.
    """
    base = snapshot_at(t)
    hs = np.asarray(eps, dtype=float)
    vals = [g_numeric(base, snapshot_at(t + h)) for h in hs]
    P = list(vals)
    n = len(hs)
    for k in range(1, n):
        for i in range(n - k):
            # Neville recursion evaluated at eps = 0
            P[i] = (hs[i + k] * P[i] - hs[i] * P[i + 1]) / (hs[i + k] - hs[i])
    return float(P[0])
