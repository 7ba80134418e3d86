"""Truncated two-sided geometric noise on ``[0..Z]``.

``Geom^Z(alpha)`` puts mass proportional to ``alpha ** -|Z/2 - x|`` on each
integer ``x`` in ``[0..Z]``. With ``alpha = e**epsilon`` and an even
``Z >= ceil(2/epsilon * ln(1/delta))``, shifting the noise by one unit moves
the hockey-stick divergence at ``e**epsilon`` by at most ``delta``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np


def _check_budget(epsilon: float, delta: float) -> None:
    if not epsilon > 0 or not math.isfinite(epsilon):
        raise ValueError(f"epsilon must be a positive finite real, got {epsilon!r}")
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta!r}")


def min_even_Z(epsilon: float, delta: float) -> int:
    """Smallest even support bound with ``Z >= ceil((2/epsilon) ln(1/delta))``."""
    _check_budget(epsilon, delta)
    z = math.ceil(2.0 / epsilon * math.log(1.0 / delta))
    return z + (z % 2)


@dataclass(frozen=True)
class NoiseParams:
    """Calibration of the truncated geometric mechanism.

    ``Z`` defaults to :func:`min_even_Z`. An explicit ``Z`` only has to be even
    and non-negative; :attr:`calibrated` tells whether it meets the privacy
    bound for ``(epsilon, delta)``. ``Z = 0`` is the zero-noise case.
    """

    epsilon: float
    delta: float
    Z: int = field(default=-1)

    def __post_init__(self) -> None:
        _check_budget(self.epsilon, self.delta)
        if self.Z == -1:
            object.__setattr__(self, "Z", min_even_Z(self.epsilon, self.delta))
        if isinstance(self.Z, bool) or int(self.Z) != self.Z:
            raise ValueError(f"Z must be an integer, got {self.Z!r}")
        object.__setattr__(self, "Z", int(self.Z))
        if self.Z < 0 or self.Z % 2:
            raise ValueError(f"Z must be even and non-negative, got {self.Z}")

    @property
    def alpha(self) -> float:
        return math.exp(self.epsilon)

    @property
    def calibrated(self) -> bool:
        return self.Z >= min_even_Z(self.epsilon, self.delta)


def _normalizer(alpha: float, Z: int) -> float:
    return (alpha - 1.0) / (alpha + 1.0 - 2.0 * alpha ** (-(Z // 2)))


def geom_pmf(params: NoiseParams, x: int) -> float:
    """Probability mass of ``Geom^Z(alpha)`` at ``x``; zero outside ``[0..Z]``."""
    Z = params.Z
    if x < 0 or x > Z or int(x) != x:
        return 0.0
    # |Z/2 - x| is an integer because Z is even; keeps pmf(x) == pmf(Z - x) exactly.
    k = abs(Z // 2 - int(x))
    alpha = params.alpha
    return _normalizer(alpha, Z) * alpha ** (-k)


def log_geom_pmf(params: NoiseParams, x: int) -> float:
    """Natural log of :func:`geom_pmf`; ``-inf`` outside the support."""
    Z = params.Z
    if x < 0 or x > Z or int(x) != x:
        return -math.inf
    k = abs(Z // 2 - int(x))
    return math.log(_normalizer(params.alpha, Z)) - params.epsilon * k


@lru_cache(maxsize=64)
def _cdf(params: NoiseParams) -> np.ndarray:
    pmf = np.array([geom_pmf(params, x) for x in range(params.Z + 1)])
    cdf = np.cumsum(pmf)
    cdf[-1] = 1.0
    return cdf


def pmf_table(params: NoiseParams) -> np.ndarray:
    return np.array([geom_pmf(params, x) for x in range(params.Z + 1)])


def sample_geom(params: NoiseParams, rng: np.random.Generator, size: int | None = None):
    """Draw from ``Geom^Z(alpha)`` by inverse CDF over the finite support.

    Consumes exactly one uniform from ``rng`` per draw, so a fixed seed and call
    sequence reproduce the same samples. Returns an ``int`` when ``size`` is
    None, otherwise an integer array.
    """
    if params.Z == 0:
        if size is None:
            rng.random()
            return 0
        rng.random(size)
        return np.zeros(size, dtype=np.int64)
    cdf = _cdf(params)
    u = rng.random(size)
    draws = np.minimum(np.searchsorted(cdf, u, side="right"), params.Z)
    if size is None:
        return int(draws)
    return draws.astype(np.int64)
