"""Multi-hop retransmission protocol: delivery probabilities and energy policy.

A control packet crosses a chain of relay hops.  Each hop n retries its
transmission up to m_n times (the per-node retransmission budget, MNTP);
with single-attempt success probability p_n the hop delivers with
probability 1 - (1 - p_n)^m_n, and the end-to-end delivery probability is
the product over hops.  Enumerating every admissible budget assignment
yields the census of reachable delivery probabilities; the spread between
its extremes is what the robust controller design has to cover.

A simple battery-threshold policy picks each node's budget: the high budget
while the node's battery is above its threshold, the low one after.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .mjls import TransitionMatrix, TransitionPolytope, dropout_chain

__all__ = [
    "HopLink",
    "MntpPolicy",
    "NetworkConfiguration",
    "ConfigurationCensus",
    "ProbabilityRange",
    "EnergyState",
    "hop_success",
    "end_to_end_success",
    "enumerate_configurations",
    "census",
    "energy_policy_step",
    "expected_attempts",
    "probability_interval_to_polytope",
]

_MAX_ENUMERATION = 2 ** 24


@dataclass(frozen=True)
class HopLink:
    """One relay hop with its single-attempt success probability."""

    node_id: int
    success_prob: float

    def __post_init__(self) -> None:
        if self.node_id < 0:
            raise ValueError("node_id must be non-negative")
        if not (0.0 < self.success_prob <= 1.0):
            raise ValueError(
                f"single-attempt success probability must lie in (0, 1], "
                f"got {self.success_prob}"
            )


@dataclass(frozen=True)
class MntpPolicy:
    """Retransmission budget levels (shared by all nodes) and the battery
    threshold below which a node falls back to the lowest level."""

    levels: tuple[int, ...]
    battery_threshold: float = 0.5

    def __post_init__(self) -> None:
        levels = tuple(int(v) for v in self.levels)
        if not levels:
            raise ValueError("at least one budget level required")
        if any(v < 1 for v in levels):
            raise ValueError("budget levels must be positive integers")
        if list(levels) != sorted(set(levels)):
            raise ValueError("budget levels must be strictly increasing")
        if not (0.0 <= self.battery_threshold <= 1.0):
            raise ValueError("battery_threshold must lie in [0, 1]")
        object.__setattr__(self, "levels", levels)


@dataclass(frozen=True)
class NetworkConfiguration:
    """One budget assignment: the chosen level per node, hop order."""

    budgets: tuple[int, ...]

    def __post_init__(self) -> None:
        budgets = tuple(int(v) for v in self.budgets)
        if not budgets or any(v < 1 for v in budgets):
            raise ValueError("budgets must be positive integers, one per node")
        object.__setattr__(self, "budgets", budgets)


@dataclass(frozen=True)
class ProbabilityRange:
    """Closed interval of end-to-end delivery probabilities."""

    q_min: float
    q_max: float

    def __post_init__(self) -> None:
        if not (0.0 < self.q_min <= self.q_max <= 1.0):
            raise ValueError(
                f"need 0 < q_min <= q_max <= 1, got [{self.q_min}, {self.q_max}]"
            )


@dataclass(frozen=True)
class EnergyState:
    """Per-node battery levels in [0, 1] and the battery cost per attempt."""

    batteries: tuple[float, ...]
    attempt_cost: float

    def __post_init__(self) -> None:
        if not self.batteries:
            raise ValueError("at least one node required")
        if any(not (0.0 <= b <= 1.0) for b in self.batteries):
            raise ValueError("battery levels must lie in [0, 1]")
        if self.attempt_cost <= 0.0:
            raise ValueError("attempt_cost must be strictly positive")
        object.__setattr__(self, "batteries", tuple(float(b) for b in self.batteries))


def hop_success(p: float, attempts: int) -> float:
    """Delivery probability of one hop given `attempts` tries: 1 - (1-p)^m."""
    if not (0.0 < p <= 1.0):
        raise ValueError(f"single-attempt probability must lie in (0, 1], got {p}")
    if attempts < 1:
        raise ValueError("attempts must be a positive integer")
    return 1.0 - (1.0 - p) ** attempts


def expected_attempts(p: float, budget: int) -> float:
    """Mean number of transmissions a hop actually makes (stop on success,
    give up after `budget` tries): (1 - (1-p)^m) / p, capped at m."""
    if not (0.0 < p <= 1.0):
        raise ValueError(f"single-attempt probability must lie in (0, 1], got {p}")
    if budget < 1:
        raise ValueError("budget must be a positive integer")
    return min(float(budget), (1.0 - (1.0 - p) ** budget) / p)


def end_to_end_success(links: tuple[HopLink, ...], config: NetworkConfiguration) -> float:
    """Product of hop delivery probabilities along the chain."""
    if len(links) != len(config.budgets):
        raise ValueError(
            f"{len(links)} links but {len(config.budgets)} budgets configured"
        )
    q = 1.0
    for link, m in zip(links, config.budgets):
        q *= hop_success(link.success_prob, m)
    return q


def enumerate_configurations(
    links: tuple[HopLink, ...], policy: MntpPolicy
) -> Iterator[tuple[int, NetworkConfiguration, float]]:
    """All |levels|^N budget assignments as (config_id, config, q) triples.

    Deterministic order: the last node's level varies fastest.  Refuses
    census sizes above 2^24 outright (the closed-form extremes are available
    without enumeration).
    """
    n = len(links)
    if n == 0:
        raise ValueError("at least one link required")
    total = len(policy.levels) ** n
    if total > _MAX_ENUMERATION:
        raise ValueError(
            f"census of {total} configurations exceeds the enumeration cap "
            f"{_MAX_ENUMERATION}"
        )
    for cid, combo in enumerate(itertools.product(policy.levels, repeat=n)):
        config = NetworkConfiguration(budgets=combo)
        yield cid, config, end_to_end_success(links, config)


@dataclass(frozen=True)
class ConfigurationCensus:
    count: int
    q_range: ProbabilityRange
    argmin: NetworkConfiguration
    argmax: NetworkConfiguration


def census(links: tuple[HopLink, ...], policy: MntpPolicy) -> ConfigurationCensus:
    """Stream the full enumeration and keep the extremes.

    With monotone hop success in the budget the extremes are the all-lowest
    and all-highest assignments; the census does not assume that and simply
    scans (the acceptance tests cross-check the closed form).
    """
    count = 0
    q_min, q_max = np.inf, -np.inf
    argmin = argmax = None
    for _, config, q in enumerate_configurations(links, policy):
        count += 1
        if q < q_min:
            q_min, argmin = q, config
        if q > q_max:
            q_max, argmax = q, config
    return ConfigurationCensus(
        count=count,
        q_range=ProbabilityRange(q_min=q_min, q_max=q_max),
        argmin=argmin,
        argmax=argmax,
    )


def energy_policy_step(
    state: EnergyState, policy: MntpPolicy, links: tuple[HopLink, ...]
) -> tuple[NetworkConfiguration, EnergyState]:
    """One protocol epoch of the battery-threshold rule.

    Nodes at or above the threshold use the highest budget, the rest the
    lowest; batteries then drain by attempt_cost times the expected number
    of attempts actually made, clipped at empty.
    """
    if len(state.batteries) != len(links):
        raise ValueError("one battery level per link required")
    lo, hi = policy.levels[0], policy.levels[-1]
    budgets = tuple(
        hi if b >= policy.battery_threshold else lo for b in state.batteries
    )
    config = NetworkConfiguration(budgets=budgets)
    drained = tuple(
        max(0.0, b - state.attempt_cost * expected_attempts(link.success_prob, m))
        for b, link, m in zip(state.batteries, links, budgets)
    )
    return config, EnergyState(batteries=drained, attempt_cost=state.attempt_cost)


def probability_interval_to_polytope(prange: ProbabilityRange) -> TransitionPolytope:
    """Two-mode dropout polytope spanned by the interval endpoints.

    Every Bernoulli dropout chain with delivery probability q in the
    interval is a convex combination of the two vertex chains.
    """
    return TransitionPolytope(
        vertices=(dropout_chain(prange.q_min), dropout_chain(prange.q_max))
    )
