"""Physical parameters, time grids and regularization order.

Units: hbar = c = 1 and frequencies are measured in units of ``omega0``
(default 1), so lengths and times share a unit.  ``d = math.inf`` is the
explicit sentinel for infinitely separated atoms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidGrid, NonPositiveParameter

INF = math.inf

WEAK_COUPLING_RATIO = 0.1
NARROW_LINE_RATIO = 10.0
DEFAULT_DT = 0.05
DEFAULT_REFINE = 10


@dataclass(frozen=True)
class CavityParams:
    """Model instance: coupling ``gamma0``, cavity width ``lam``, resonance
    ``omega0`` and interatomic distance ``d`` (``math.inf`` allowed)."""

    gamma0: float
    lam: float
    omega0: float = 1.0
    d: float = 0.0

    @property
    def far(self) -> bool:
        return math.isinf(self.d)

    def with_d(self, d: float) -> "CavityParams":
        return CavityParams(self.gamma0, self.lam, self.omega0, d)


@dataclass(frozen=True)
class ValidityReport:
    errors: tuple = ()
    warnings: tuple = ()

    @property
    def ok(self) -> bool:
        return not self.errors

    def raise_for_errors(self):
        if self.errors:
            raise self.errors[0]


def validate_params(p: CavityParams) -> ValidityReport:
    """Check positivity of every field and flag regimes where the model's
    approximations (RWA, negative-frequency extension) become questionable."""
    errors = []
    for name in ("gamma0", "lam", "omega0"):
        value = getattr(p, name)
        if not (value > 0):
            errors.append(NonPositiveParameter(name))
    if not (p.d >= 0):
        errors.append(NonPositiveParameter("d"))
    warnings = []
    if not errors:
        if p.gamma0 / p.omega0 > WEAK_COUPLING_RATIO:
            warnings.append(
                f"weak-coupling: gamma0/omega0 = {p.gamma0 / p.omega0:.3g} > {WEAK_COUPLING_RATIO}"
            )
        if p.omega0 / p.lam < NARROW_LINE_RATIO:
            warnings.append(
                f"narrow-line: omega0/lambda = {p.omega0 / p.lam:.3g} < {NARROW_LINE_RATIO}"
            )
    return ValidityReport(tuple(errors), tuple(warnings))


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Sample times ``nodes`` on ``[0, t_end]``.

    ``window_refine`` is the number of quadrature sub-steps per base step used
    by the direct solver inside the retardation window ``[t - d, t]``.
    """

    t_end: float
    dt: float
    nodes: np.ndarray
    window_refine: int = DEFAULT_REFINE
    step: float = field(default=0.0)

    def __len__(self):
        return self.nodes.size

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.nodes)

    def index_of(self, t: float) -> int:
        """Index of the node closest to ``t``."""
        i = int(np.searchsorted(self.nodes, t))
        if i == 0:
            return 0
        if i >= self.nodes.size:
            return self.nodes.size - 1
        return i if self.nodes[i] - t < t - self.nodes[i - 1] else i - 1

    def same_as(self, other: "TimeGrid") -> bool:
        return self is other or (
            self.nodes.shape == other.nodes.shape and np.array_equal(self.nodes, other.nodes)
        )


def make_grid(p: CavityParams, t_end: float, dt: float = DEFAULT_DT,
              refine: int = DEFAULT_REFINE) -> TimeGrid:
    """Uniform grid of step ``<= dt`` from 0 to ``t_end``.

    For finite ``d > 0`` the step is also capped at ``2*pi/(20*omega0)`` so the
    oscillatory branch of the two-atom kernel is resolved, and ``d`` itself is
    inserted as a node when ``0 < d < t_end``.
    """
    if not (t_end > 0) or not (dt > 0) or dt > t_end or not math.isfinite(t_end):
        raise InvalidGrid(f"need 0 < dt <= t_end < inf, got dt={dt}, t_end={t_end}")
    if refine < 1:
        raise InvalidGrid("refine must be >= 1")
    h = dt
    if p.d > 0 and not p.far:
        h = min(h, 2 * math.pi / (20 * p.omega0))
    ratio = t_end / h
    n = int(round(ratio))
    if abs(ratio - n) > 1e-9 * max(1.0, ratio):
        n = int(math.floor(ratio))
    nodes = h * np.arange(n + 1, dtype=float)
    if t_end - nodes[-1] > 1e-9 * h:
        nodes = np.append(nodes, t_end)
    nodes[-1] = t_end

    if 0 < p.d < t_end:
        j = int(np.searchsorted(nodes, p.d))
        near = [k for k in (j - 1, j) if 0 <= k < nodes.size]
        k = min(near, key=lambda k: abs(nodes[k] - p.d))
        if abs(nodes[k] - p.d) <= 1e-9 * h and 0 < k < nodes.size - 1:
            nodes[k] = p.d
        elif nodes[k] != p.d:
            nodes = np.insert(nodes, j, p.d)
    nodes.setflags(write=False)
    return TimeGrid(t_end=float(t_end), dt=float(dt), nodes=nodes,
                    window_refine=int(refine), step=float(h))


@dataclass(frozen=True)
class RegOrder:
    """Pole order ``alpha`` of the root-power regularization: the integrand
    uses ``g**(1/(alpha+1))`` and the integral is raised to ``alpha+1``."""

    alpha: int = 1

    def __post_init__(self):
        if int(self.alpha) != self.alpha or self.alpha < 1:
            raise ValueError("alpha must be an integer >= 1")

    @property
    def power(self) -> int:
        return self.alpha + 1
