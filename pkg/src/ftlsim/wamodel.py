"""Analytical write-amplification model for a uniform random workload.

A freshly written block of ``B`` pages decays exponentially as the rest of the
logical space is overwritten, and at equilibrium the fraction of live pages
found in a victim block satisfies ``LBA/PBA = (delta - 1) / ln(delta)``.
Two independent solvers are provided for that relation: plain bisection and
the closed form through the principal branch of the Lambert W function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

_INV_E = math.exp(-1.0)
_BISECT_EPS = 1e-15
_BISECT_TOL = 1e-12


@dataclass(frozen=True)
class ModelParams:
    pages_per_block: int
    lba: int
    pba: int

    def __post_init__(self):
        if self.pages_per_block < 1:
            raise ValueError("pages_per_block must be >= 1")
        if not 0 < self.lba < self.pba:
            raise ValueError("need 0 < lba < pba")
        if self.pba % self.pages_per_block:
            raise ValueError("pba must be a multiple of pages_per_block")

    @property
    def op(self) -> int:
        return self.pba - self.lba

    @property
    def blocks(self) -> int:
        return self.pba // self.pages_per_block

    @property
    def ratio(self) -> float:
        return self.lba / self.pba


@dataclass(frozen=True)
class EquilibriumPoint:
    delta: float
    wa: float

    @classmethod
    def at(cls, ratio: float) -> "EquilibriumPoint":
        d = delta_at_equilibrium(ratio)
        return cls(d, write_amplification(d))


def live_pages_after(writes: float, params: ModelParams) -> float:
    """Expected live pages left in a full block after ``writes`` uniform updates."""
    if writes < 0:
        raise ValueError("write count must be non-negative")
    return params.pages_per_block * math.exp(-writes / params.lba)


def writes_until_live_count(live: float, params: ModelParams) -> float:
    """Inverse of :func:`live_pages_after`."""
    if not 0 < live <= params.pages_per_block:
        raise ValueError("live count must lie in (0, B]")
    return params.lba * math.log(params.pages_per_block / live)


def _ratio_of_delta(d: float) -> float:
    return (d - 1.0) / math.log(d)


def _check_ratio(r: float) -> None:
    if not 0.0 < r < 1.0:
        raise ValueError(f"ratio must lie in (0, 1), got {r!r}")


def delta_at_equilibrium(r: float) -> float:
    """Solve ``r = (d - 1)/ln d`` for d in (0, 1) by bisection.

    The right-hand side is strictly increasing on (0, 1), going from 0 to 1,
    so the root is unique.
    """
    _check_ratio(r)
    lo, hi = _BISECT_EPS, 1.0 - _BISECT_EPS
    if r <= _ratio_of_delta(lo):
        return _tiny_delta(r)
    if r >= _ratio_of_delta(hi):
        return hi
    while hi - lo > _BISECT_TOL * hi:
        mid = 0.5 * (lo + hi)
        if _ratio_of_delta(mid) < r:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _tiny_delta(r: float) -> float:
    # below eps the root is exp(t) with (exp(t) - 1)/t = r; bisect on t so
    # the result keeps shrinking with r instead of sticking at eps
    lo, hi = -745.0, math.log(_BISECT_EPS)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if (math.expm1(mid)) / mid < r:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-12:
            break
    return math.exp(0.5 * (lo + hi))


def lambert_w0(z: float) -> float:
    """Principal branch of the Lambert W function for real ``z >= -1/e``.

    Initial guess: the branch-point series ``-1 + p - p^2/3 + 11 p^3/72`` with
    ``p = sqrt(2 (e z + 1))`` for ``z < -0.25``; ``log1p(z)`` for
    ``-0.25 <= z < 3``; ``L1 - L2 + L2/L1`` (``L1 = ln z``, ``L2 = ln L1``)
    above. Refined with Halley steps.
    """
    if math.isnan(z):
        raise ValueError("z is NaN")
    if z < -_INV_E:
        # tolerate a rounding hair below the branch point
        if z < -_INV_E - 1e-15:
            raise ValueError(f"lambert_w0 undefined for z < -1/e, got {z!r}")
        z = -_INV_E
    if z == 0.0:
        return 0.0
    if z == -_INV_E:
        return -1.0
    if math.isinf(z):
        return math.inf

    if z < -0.25:
        p = math.sqrt(max(0.0, 2.0 * (math.e * z + 1.0)))
        w = -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p ** 3
    elif z < 3.0:
        w = math.log1p(z)
    else:
        l1 = math.log(z)
        l2 = math.log(l1)
        w = l1 - l2 + l2 / l1

    for _ in range(100):
        ew = math.exp(w)
        f = w * ew - z
        wp1 = w + 1.0
        if wp1 == 0.0:
            break
        denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1)
        if denom == 0.0:
            break
        step = f / denom
        w -= step
        if abs(step) <= 1e-16 * (1.0 + abs(w)):
            break
    return w


def delta_at_equilibrium_lambert(r: float) -> float:
    """Closed form ``delta = -r * W0(-(1/r) * exp(-1/r))``."""
    _check_ratio(r)
    inv = 1.0 / r
    return -r * lambert_w0(-inv * math.exp(-inv))


def write_amplification(delta: float) -> float:
    if not 0.0 <= delta < 1.0:
        raise ValueError(f"delta must lie in [0, 1), got {delta!r}")
    return 1.0 / (1.0 - delta)


def equilibrium_wa(r: float) -> float:
    """Steady-state WA predicted for a uniform workload at ``LBA/PBA = r``."""
    return write_amplification(delta_at_equilibrium(r))
