"""Lorentzian bath correlation functions and two-atom Volterra kernels.

All functions accept scalar or array ``t`` (``t >= 0``).  ``f2`` is the
closed form obtained by extending the frequency integral to the whole real
line; the retardation kink sits at ``t = d`` where the two branches meet
(Heaviside convention ``theta(0) = 1/2``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .model import CavityParams


def spectral_density(omega, p: CavityParams):
    """Lorentzian ``J(omega)`` of width ``lam`` centred at ``omega0``."""
    omega = np.asarray(omega, dtype=float)
    out = p.gamma0**2 * p.lam / (2 * math.pi) / ((omega - p.omega0) ** 2 + p.lam**2)
    return out if out.ndim else float(out)


def f1(t, p: CavityParams):
    """Single-atom correlation ``(gamma0**2/2) exp(-lam t)``."""
    t = np.asarray(t, dtype=float)
    out = (0.5 * p.gamma0**2) * np.exp(-p.lam * t) + 0j
    return out if out.ndim else complex(out)


def _theta(x):
    return np.where(x > 0, 1.0, np.where(x < 0, 0.0, 0.5))


def f2(t, p: CavityParams):
    """Cross correlation between atoms at distance ``d``.

    Raises :class:`DomainError` for ``d == 0`` (use :func:`f1`); returns zero
    for the ``d = inf`` sentinel.
    """
    if p.d == 0:
        raise DomainError("f2 is singular at d = 0; the d -> 0 limit equals f1")
    t = np.asarray(t, dtype=float)
    if p.far:
        out = np.zeros_like(t, dtype=complex)
        return out if out.ndim else complex(out)
    lam, w0, d = p.lam, p.omega0, p.d
    amp = p.gamma0**2 / (4 * d)
    a = lam + 1j * w0
    b = lam - 1j * w0
    # exponents are clamped to the branch where each term is active so that
    # neither branch overflows for large d or t
    tl = np.maximum(t, d)
    te = np.minimum(t, d)
    late = _theta(t - d) * np.exp(lam * (d - tl) + 1j * w0 * d) / a
    common = np.exp(-a * d - lam * t) / a
    early = _theta(d - t) * (np.exp(lam * (te - d) + 1j * w0 * d) / b
                             - 2 * lam / (w0**2 + lam**2) * np.exp(1j * w0 * t))
    out = amp * (late - common - early)
    return out if out.ndim else complex(out)


@dataclass(frozen=True)
class KernelId:
    """``F1``, ``F2`` or ``K`` with channel ``m``; ``K_m = f1 - (-1)**m f2``."""

    variant: str
    m: int = 1

    def __post_init__(self):
        if self.variant not in ("F1", "F2", "K"):
            raise ValueError(f"unknown kernel variant {self.variant!r}")
        if self.m not in (1, 2):
            raise ValueError("channel index m must be 1 or 2")


def channel_sign(m: int) -> int:
    """+1 for the symmetric channel (m=1), -1 for the antisymmetric one."""
    if m not in (1, 2):
        raise ValueError("channel index m must be 1 or 2")
    return -((-1) ** m)


def kernel(kid: KernelId, t, p: CavityParams):
    if kid.variant == "F1":
        return f1(t, p)
    if kid.variant == "F2":
        return f2(t, p)
    s = channel_sign(kid.m)
    if p.d == 0:
        return (1 + s) * np.asarray(f1(t, p)) if np.ndim(t) else (1 + s) * f1(t, p)
    return f1(t, p) + s * f2(t, p)


@dataclass(frozen=True)
class ExpKernel:
    """Exponential-sum form of ``K_m``.

    ``K(tau) = far_coef * exp(-lam * tau)`` for ``tau >= d`` and
    ``K(tau) = sum(near_coefs * exp(near_rates * tau))`` for ``tau < d``.
    ``d = inf`` means only the near form applies; a kernel with all
    coefficients zero is identically zero.
    """

    d: float
    lam: float
    far_coef: complex
    near_rates: tuple
    near_coefs: tuple

    @property
    def zero(self) -> bool:
        return self.far_coef == 0 and all(c == 0 for c in self.near_coefs)


def exp_kernel(m: int, p: CavityParams) -> ExpKernel:
    """Decompose ``K_m`` into exponentials for the O(n) solver."""
    s = channel_sign(m)
    g2 = 0.5 * p.gamma0**2
    lam, w0 = p.lam, p.omega0
    if p.far:
        return ExpKernel(math.inf, lam, 0j, (-lam,), (complex(g2),))
    if p.d == 0:
        c = complex((1 + s) * g2)
        return ExpKernel(0.0, lam, c, (), ())
    d = p.d
    amp = p.gamma0**2 / (4 * d)
    a = lam + 1j * w0
    b = lam - 1j * w0
    # far_coef multiplies exp(-lam*tau) with tau >= d; store it pre-scaled by
    # exp(-lam*d) so that it never overflows for large d
    far_scaled = g2 * math.exp(-lam * d) + s * amp * (np.exp(1j * w0 * d) - np.exp(-2 * lam * d - 1j * w0 * d)) / a
    near_rates = (-lam, lam, 1j * w0)
    near_coefs = (
        complex(g2 - s * amp * np.exp(-a * d) / a),
        complex(-s * amp * np.exp(-b * d) / b),
        complex(s * amp * 2 * lam / (w0**2 + lam**2)),
    )
    return ExpKernel(d, lam, complex(far_scaled), near_rates, near_coefs)


def eval_exp_kernel(k: ExpKernel, t):
    """Evaluate an :class:`ExpKernel`; used to cross-check the decomposition."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t, dtype=complex)
    if k.zero:
        return out
    if math.isinf(k.d):
        near = np.ones_like(t, dtype=bool)
    else:
        near = t < k.d
    far = ~near
    if np.any(far):
        out[far] = k.far_coef * np.exp(-k.lam * (t[far] - k.d))
    for mu, c in zip(k.near_rates, k.near_coefs):
        out[near] += c * np.exp(mu * t[near])
    return out
