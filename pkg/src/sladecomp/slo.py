"""SLO vectors, the strictness partial order, and end-to-end composition."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np


class Ordering(enum.Enum):
    STRICTER = "stricter"
    LOOSER = "looser"
    EQUAL = "equal"
    INCOMPARABLE = "incomparable"


@dataclass(frozen=True)
class SloVector:
    """A (delay bound, throughput floor) pair.

    ``delay`` is in milliseconds, ``throughput`` in Gbps. A smaller delay or a
    larger throughput makes the SLA harder to satisfy.
    """

    delay: float
    throughput: float

    def __post_init__(self):
        for name in ("delay", "throughput"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite, got {v!r}")
            if v < 0:
                raise ValueError(f"{name} must be >= 0, got {v!r}")

    def as_tuple(self) -> tuple[float, float]:
        return (self.delay, self.throughput)


@dataclass(frozen=True)
class FeatureSpec:
    """Sampling box for one domain plus the monotone input orientation.

    The orientation is fixed: delay enters with +1, throughput with -1, so a
    looser SLA never has a smaller oriented coordinate.
    """

    delay_interval: tuple[float, float] = (0.0, 100.0)
    throughput_interval: tuple[float, float] = (0.0, 1.0)

    ORIENTATION = (1, -1)

    def __post_init__(self):
        for name in ("delay_interval", "throughput_interval"):
            lo, hi = getattr(self, name)
            if not (math.isfinite(lo) and math.isfinite(hi)) or hi <= lo:
                raise ValueError(f"degenerate {name}: [{lo}, {hi}]")
            object.__setattr__(self, name, (float(lo), float(hi)))

    @property
    def orientation(self) -> tuple[int, int]:
        return self.ORIENTATION

    @property
    def delay_width(self) -> float:
        return self.delay_interval[1] - self.delay_interval[0]

    @property
    def throughput_width(self) -> float:
        return self.throughput_interval[1] - self.throughput_interval[0]

    def orient(self, delay, throughput) -> np.ndarray:
        """Vectorised :func:`orient_features`; returns an ``(n, 2)`` array."""
        delay = np.asarray(delay, dtype=float)
        throughput = np.asarray(throughput, dtype=float)
        z0 = (delay - self.delay_interval[0]) / self.delay_width
        z1 = (self.throughput_interval[1] - throughput) / self.throughput_width
        return np.stack([np.atleast_1d(z0), np.atleast_1d(z1)], axis=-1)

    def chain_factors(self) -> np.ndarray:
        """d(oriented z)/d(delay, throughput), used to map input gradients."""
        return np.array([1.0 / self.delay_width, -1.0 / self.throughput_width])


def _check_finite(s: SloVector) -> None:
    if not (math.isfinite(s.delay) and math.isfinite(s.throughput)):
        raise ValueError(f"non-finite SLO vector {s!r}")


def compare_partial(a: SloVector, b: SloVector) -> Ordering:
    """Order ``a`` relative to ``b``.

    ``STRICTER`` means ``a`` asks for no more delay and no less throughput than
    ``b`` and differs in at least one coordinate.
    """
    _check_finite(a)
    _check_finite(b)
    if a.delay == b.delay and a.throughput == b.throughput:
        return Ordering.EQUAL
    if a.delay <= b.delay and a.throughput >= b.throughput:
        return Ordering.STRICTER
    if a.delay >= b.delay and a.throughput <= b.throughput:
        return Ordering.LOOSER
    return Ordering.INCOMPARABLE


def precedes(a: SloVector, b: SloVector) -> bool:
    """``a`` is at least as strict as ``b`` (Equal counts)."""
    return compare_partial(a, b) in (Ordering.STRICTER, Ordering.EQUAL)


def stricter_matrix(delays, throughputs) -> np.ndarray:
    """Boolean matrix ``M[i, j] = x_i ⪯ x_j`` (reflexive, Equal included)."""
    d = np.asarray(delays, dtype=float)
    t = np.asarray(throughputs, dtype=float)
    return (d[:, None] <= d[None, :]) & (t[:, None] >= t[None, :])


def compose_e2e(parts: Sequence[SloVector]) -> SloVector:
    """End-to-end SLO: delays add up, throughput is the bottleneck minimum."""
    if len(parts) == 0:
        raise ValueError("cannot compose an empty list of SLO vectors")
    return SloVector(
        delay=float(sum(p.delay for p in parts)),
        throughput=float(min(p.throughput for p in parts)),
    )


def validate_decomposition(
    parts: Sequence[SloVector], e2e: SloVector, tol: float = 1e-9
) -> bool:
    if tol < 0:
        raise ValueError("tol must be >= 0")
    if len(parts) == 0:
        return False
    composed = compose_e2e(parts)
    return (
        abs(composed.delay - e2e.delay) <= tol
        and abs(composed.throughput - e2e.throughput) <= tol
    )


def orient_features(s: SloVector, spec: FeatureSpec) -> np.ndarray:
    """Map an SLO to min-max scaled coordinates that grow with looseness.

    Out-of-box inputs are extrapolated linearly, never clamped.
    """
    return spec.orient(s.delay, s.throughput)[0]


def as_array(parts: Sequence[SloVector]) -> np.ndarray:
    """Stack SLO vectors into an ``(n, 2)`` array of (delay, throughput)."""
    return np.array([p.as_tuple() for p in parts], dtype=float).reshape(-1, 2)
