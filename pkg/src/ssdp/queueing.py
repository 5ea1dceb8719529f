"""Service-time moments and M/G/1 waiting-time formulas.

Service times follow the location-scale representation

    S = 1/mu + sum_l (1/mu)**l * delta_l * eps_l,

with independent zero-mean, unit-variance ``eps_l``. Only the first two
moments matter for the Pollaczek-Khinchine waiting time, so the model is
fully described by the ``deltas`` tuple.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

INF = math.inf


@dataclass(frozen=True)
class LocationScaleSpec:
    """Scale coefficients ``delta_0 .. delta_L`` of a service-time model.

    Examples:
        ``LocationScaleSpec((0.0, 1.0))`` is exponential service, variance
        ``mu**-2``; ``LocationScaleSpec((theta / 3**0.5,))`` is the uniform
        family with constant variance ``theta**2 / 3``.
    """

    deltas: tuple[float, ...]

    def __post_init__(self):
        deltas = tuple(float(d) for d in self.deltas)
        if not deltas:
            raise ValueError("deltas must be nonempty")
        if any(not math.isfinite(d) or d < 0 for d in deltas):
            raise ValueError("every delta must be finite and nonnegative")
        object.__setattr__(self, "deltas", deltas)

    @property
    def degree(self) -> int:
        """Highest power ``L`` of ``1/mu`` in the representation."""
        return len(self.deltas) - 1

    @property
    def alphas(self) -> tuple[float, ...]:
        return tuple(d * d for d in self.deltas)

    def affine_coefficients(self) -> tuple[float, float]:
        """Return ``(a, b)`` with ``v(mu) = a + b / mu**2``; requires ``L <= 1``."""
        if self.degree > 1:
            raise ValueError("variance is not affine in mu**-2 when L > 1")
        a = self.deltas[0] ** 2
        b = self.deltas[1] ** 2 if self.degree == 1 else 0.0
        return a, b


def variance_of(spec: LocationScaleSpec, mu: float) -> float:
    """Service-time variance ``sum_l delta_l**2 * mu**(-2 l)``."""
    if not mu > 0:
        raise ValueError(f"service rate must be positive, got {mu}")
    inv2 = 1.0 / (mu * mu)
    total = 0.0
    power = 1.0
    for d in spec.deltas:
        total += d * d * power
        power *= inv2
    return total


def _check_inputs(lam: float, mu: float, v: float) -> None:
    if lam < 0 or v < 0 or mu < 0 or math.isnan(lam + mu + v):
        raise ValueError(f"negative or NaN input: lambda={lam}, mu={mu}, v={v}")


def wt_total(lam: float, mu: float, v: float) -> float:
    """Expected total time in system (sum over customers) per unit time.

    Evaluates ``lam * (lam * (1 + v mu^2) / (2 mu (mu - lam)) + 1/mu)`` with
    the conventions ``a/0 = inf`` (a > 0) and ``0/0 = 0``: an idle facility
    contributes nothing, an unstable one returns ``inf``.
    """
    _check_inputs(lam, mu, v)
    if lam == 0:
        return 0.0
    if mu <= lam:
        return INF
    return lam * (lam * (1.0 + v * mu * mu) / (2.0 * mu * (mu - lam)) + 1.0 / mu)


def wt_individual(lam: float, mu: float, v: float) -> float:
    """Expected time in system of a single customer.

    With no arrivals the customer still needs one service, so the value is
    ``1/mu`` rather than zero.
    """
    _check_inputs(lam, mu, v)
    if mu == 0:
        return INF
    if mu <= lam:
        return INF
    return lam * (1.0 + v * mu * mu) / (2.0 * mu * (mu - lam)) + 1.0 / mu


def wt_individual_decomposed(lam: float, mu: float, a: float, b: float) -> float:
    """Individual waiting time for ``v = a + b mu^-2`` as a sum of convex-friendly terms.

    ``(b + 1) / (2 (mu - lam)) + a lam / (2 (1 - rho)) + (1 - b) / (2 mu)``
    with ``rho = lam / mu``.
    """
    _check_inputs(lam, mu, a + b)
    if mu <= lam:
        return INF
    rho = lam / mu
    return (b + 1.0) / (2.0 * (mu - lam)) + a * lam / (2.0 * (1.0 - rho)) + (1.0 - b) / (2.0 * mu)


def wt_total_array(lam: np.ndarray, mu: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Vectorized :func:`wt_total` (no argument checking)."""
    lam, mu, v = np.broadcast_arrays(np.asarray(lam, float), np.asarray(mu, float), np.asarray(v, float))
    out = np.full(lam.shape, INF)
    idle = lam == 0
    ok = ~idle & (mu > lam)
    out[idle] = 0.0
    l, m, vv = lam[ok], mu[ok], v[ok]
    out[ok] = l * (l * (1.0 + vv * m * m) / (2.0 * m * (m - l)) + 1.0 / m)
    return out


def spec_from_alphas(alphas: Sequence[float]) -> LocationScaleSpec:
    return LocationScaleSpec(tuple(math.sqrt(a) for a in alphas))
