"""Single-unit availability processes on a point sequence.

A :class:`PointProcessSpec` describes one unit of a resource facing arrival
points sigma_1 < ... < sigma_T, each with an activation probability p_t and
a shared usage distribution F. The random process activates the unit (if
available) independently with probability p_t and sends it away for an
F-distributed time; the fluid process consumes the available fraction
deterministically and returns it according to the cdf. The two have the
same per-point availability, which the exact recursion computes directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import UsageDistribution, derive_seed

__all__ = [
    "PointProcessSpec",
    "FluidTrace",
    "MonotoneWitness",
    "fluid_availability",
    "simulate_random_process",
    "simulate_random_process_stats",
    "augment_zero_set",
    "compare_monotone",
    "points_from_times",
]

ZERO_AVAIL_TOL = 1e-12

_MC_CHUNK = 20_000


@dataclass(frozen=True)
class PointProcessSpec:
    dist: UsageDistribution
    points: tuple[float, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(float(s) for s in self.points))
        object.__setattr__(self, "probs", tuple(float(p) for p in self.probs))
        if len(self.points) != len(self.probs):
            raise ValueError("points and probs must have equal length")
        if not self.points:
            raise ValueError("need at least one point")
        prev = 0.0
        for s in self.points:
            if not s > prev:
                raise ValueError("points must be strictly increasing and > 0")
            prev = s
        for p in self.probs:
            if not 0.0 <= p <= 1.0:
                raise ValueError("probabilities must lie in [0, 1]")

    def to_json(self) -> dict:
        return {"dist": self.dist.to_json(), "points": list(self.points), "probs": list(self.probs)}


@dataclass(frozen=True)
class FluidTrace:
    availability: tuple[float, ...]
    reward: float


@dataclass(frozen=True)
class MonotoneWitness:
    reward_lo: float
    reward_hi: float
    holds: bool


def points_from_times(times: Sequence[float]) -> list[float]:
    """Shift instance arrival times onto the strictly positive line.

    Only gaps matter to the availability recursion, so a +1 shift when the
    first time is <= 0 is harmless.
    """
    times = list(times)
    shift = 1.0 if times and times[0] <= 0.0 else 0.0
    return [t + shift for t in times]


def fluid_availability(spec: PointProcessSpec) -> FluidTrace:
    """Exact per-point availability of the fluid process, O(T^2).

    Forward recursion: the fraction available at a point is what survived the
    previous point's consumption plus all fractional mass returning in the
    interval since, per the cdf increments of each past consumption.
    """
    sigma = spec.points
    p = spec.probs
    T = len(sigma)
    cdf = spec.dist.cdf
    eta = np.empty(T)
    eta[0] = 1.0
    for t in range(1, T):
        back = eta[t - 1] * (1.0 - p[t - 1])
        returned = 0.0
        for tau in range(t):
            inc = cdf(sigma[t] - sigma[tau]) - cdf(sigma[t - 1] - sigma[tau])
            returned += eta[tau] * p[tau] * inc
        value = back + returned
        assert -1e-9 <= value <= 1.0 + 1e-9, f"availability {value} escaped [0,1] at point {t}"
        eta[t] = min(max(value, 0.0), 1.0)
    reward = float(np.dot(eta, p))
    return FluidTrace(availability=tuple(float(v) for v in eta), reward=reward)


def simulate_random_process(
    spec: PointProcessSpec, replications: int, seed: int
) -> tuple[float, list[float]]:
    """Monte Carlo mean reward and per-point availability frequencies."""
    mean, freqs, _ = simulate_random_process_stats(spec, replications, seed)
    return mean, freqs


def simulate_random_process_stats(
    spec: PointProcessSpec, replications: int, seed: int
) -> tuple[float, list[float], float]:
    """Like :func:`simulate_random_process` plus the reward's standard error.

    Replications are processed in fixed-size chunks with seeds derived from
    the chunk index, so results do not depend on how chunks are scheduled.
    """
    if replications < 1:
        raise ValueError("replications must be >= 1")
    sigma = np.asarray(spec.points)
    p = np.asarray(spec.probs)
    T = len(sigma)

    reward_total = 0.0
    reward_sq_total = 0.0
    avail_counts = np.zeros(T)
    done = 0
    chunk_idx = 0
    while done < replications:
        n = min(_MC_CHUNK, replications - done)
        rng = np.random.default_rng(derive_seed(seed, "mc-chunk", chunk_idx))
        return_time = np.full(n, -np.inf)
        rewards = np.zeros(n)
        for t in range(T):
            available = return_time <= sigma[t]
            avail_counts[t] += int(available.sum())
            activate = available & (rng.random(n) < p[t])
            durations = spec.dist.sample(rng, n)
            return_time = np.where(activate, sigma[t] + durations, return_time)
            rewards += activate
        reward_total += float(rewards.sum())
        reward_sq_total += float((rewards ** 2).sum())
        done += n
        chunk_idx += 1

    mean = reward_total / replications
    var = max(reward_sq_total / replications - mean ** 2, 0.0)
    stderr = math.sqrt(var / replications)
    freqs = [float(c) / replications for c in avail_counts]
    return mean, freqs, stderr


def augment_zero_set(spec: PointProcessSpec) -> PointProcessSpec:
    """Raise to 1 the probability at every point with zero fluid availability.

    The unit is never there to consume at those points, so the reward and the
    whole availability profile are unchanged.
    """
    trace = fluid_availability(spec)
    probs = tuple(
        1.0 if eta <= ZERO_AVAIL_TOL else p
        for eta, p in zip(trace.availability, spec.probs)
    )
    return PointProcessSpec(dist=spec.dist, points=spec.points, probs=probs)


def compare_monotone(spec_lo: PointProcessSpec, spec_hi: PointProcessSpec) -> MonotoneWitness:
    """Check the fluid reward is monotone in pointwise-ordered probabilities."""
    if spec_lo.dist != spec_hi.dist or spec_lo.points != spec_hi.points:
        raise ValueError("specs must share the distribution and point sequence")
    for lo, hi in zip(spec_lo.probs, spec_hi.probs):
        if lo > hi:
            raise ValueError("probabilities are not pointwise comparable (lo <= hi)")
    r_lo = fluid_availability(spec_lo).reward
    r_hi = fluid_availability(spec_hi).reward
    return MonotoneWitness(reward_lo=r_lo, reward_hi=r_hi, holds=r_lo <= r_hi + 1e-9)
