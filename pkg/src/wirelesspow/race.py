"""Mining race between one aggregate attacker and the honest network.

Each round one side finds the next block first: the attacker with probability
``q_w``, the honest side otherwise. An honest block only counts if its
broadcast succeeds (probability ``q_c``); a lost honest block is orphaned and
the attacker's deficit is unchanged. Rounds that move the deficit are called
effective rounds. Per effective round the attacker gains with probability

    q = q_w / (q_w + (1 - q_w) q_c)

so the deficit is a +-1 random walk and the catch-up probability from deficit
z is the gambler's-ruin result ``min(1, Q**z)`` with ``Q = q / (1 - q)``.
"""

from __future__ import annotations

import enum
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .channel import LinkParams, q_c as link_q_c

DEFAULT_HORIZON = 1000


def _check_prob(name: str, value: float) -> None:
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must be in [0, 1], got {value!r}")


def effective_round_prob(q_w: float, q_c: float) -> float:
    _check_prob("q_w", q_w)
    _check_prob("q_c", q_c)
    denom = q_w + (1.0 - q_w) * q_c
    if denom <= 0.0:
        raise ValueError("degenerate race: no effective rounds occur when q_w = q_c = 0")
    return q_w / denom


def advantage_ratio(q_w: float, q_c: float) -> float:
    """Q = q_w / ((1 - q_w) q_c); +inf when the honest side can never advance."""
    _check_prob("q_w", q_w)
    _check_prob("q_c", q_c)
    denom = (1.0 - q_w) * q_c
    if denom == 0.0:
        return math.inf
    return q_w / denom


def region(q_w: float, q_c: float) -> str:
    """"A" when the attacker catches up almost surely (Q >= 1), else "B"."""
    return "A" if advantage_ratio(q_w, q_c) >= 1.0 else "B"


def catch_up_probability(q_w: float, q_c: float, z: int, strict: bool = False) -> float:
    """Probability the attacker ever erases a ``z``-block deficit.

    With ``strict=True`` the attacker must get one block ahead rather than tie.
    """
    if z < 0:
        raise ValueError("z must be non-negative")
    depth = z + 1 if strict else z
    if depth == 0:
        return 1.0
    ratio = advantage_ratio(q_w, q_c)
    if ratio >= 1.0:
        return 1.0
    return ratio**depth


def min_attacker_power(q_c: float, z: int, target_prob: float = 1.0) -> float:
    """Smallest q_w whose catch-up probability from deficit ``z`` reaches ``target_prob``.

    Inverts ``Q**z = target``: ``Q* = target**(1/z)`` and
    ``q_w* = Q* q_c / (1 + Q* q_c)``. For ``target_prob = 1`` this is the
    guaranteed-success bound ``q_c / (1 + q_c)``, which is 1/2 on a perfect
    channel.
    """
    _check_prob("q_c", q_c)
    if q_c <= 0.0:
        raise ValueError("q_c must be positive")
    if z < 1:
        raise ValueError("z must be a positive integer")
    if target_prob == 0.0:
        raise ValueError("vacuous target")
    if not 0.0 < target_prob <= 1.0:
        raise ValueError("target_prob must be in (0, 1]")
    ratio = 1.0 if target_prob == 1.0 else target_prob ** (1.0 / z)
    q_w = ratio * q_c / (1.0 + ratio * q_c)
    # float rounding can leave Q**z a hair under the target; step up to the first q_w that meets it
    while catch_up_probability(q_w, q_c, z) < target_prob:
        q_w = math.nextafter(q_w, 1.0)
    return q_w


def aggregate_attackers(shares: Iterable[float]) -> float:
    """Cooperating attackers act as one node holding the sum of their shares."""
    total = math.fsum(shares)
    _check_prob("total attacker share", total)
    return total


class RoundOutcome(enum.Enum):
    ATTACKER_WIN = "attacker_win"
    HONEST_WIN_DELIVERED = "honest_win_delivered"
    HONEST_WIN_LOST = "honest_win_lost"


@dataclass(frozen=True)
class RaceParams:
    q_w: float
    q_c: float
    z: int = 6
    horizon: int = DEFAULT_HORIZON
    strict: bool = False

    def __post_init__(self):
        _check_prob("q_w", self.q_w)
        _check_prob("q_c", self.q_c)
        if self.z < 0:
            raise ValueError("z must be non-negative")
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")

    @classmethod
    def from_link(cls, q_w: float, link: LinkParams, **kwargs) -> "RaceParams":
        return cls(q_w=q_w, q_c=link_q_c(link), **kwargs)

    @property
    def q(self) -> float:
        return effective_round_prob(self.q_w, self.q_c)

    @property
    def Q(self) -> float:
        return advantage_ratio(self.q_w, self.q_c)

    @property
    def p_theory(self) -> float:
        return catch_up_probability(self.q_w, self.q_c, self.z, self.strict)


def sample_round(q_w: float, q_c: float, rng: np.random.Generator) -> RoundOutcome:
    """Draw one raw mining round."""
    u = rng.random()
    if u < q_w:
        return RoundOutcome.ATTACKER_WIN
    if u < q_w + (1.0 - q_w) * q_c:
        return RoundOutcome.HONEST_WIN_DELIVERED
    return RoundOutcome.HONEST_WIN_LOST


@dataclass
class TrialResult:
    """One race. ``gap_trajectory[i]`` is the deficit after effective round i + 1."""

    success: bool
    success_round: Optional[int]
    gap_trajectory: np.ndarray
    raw_rounds: int = 0

    @property
    def effective_rounds(self) -> int:
        return len(self.gap_trajectory)


def trial_rng(master_seed: int, index: int) -> np.random.Generator:
    """Independent stream for trial ``index``, reproducible without running earlier trials."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(master_seed, spawn_key=(index,))))


def run_trial(params: RaceParams, rng: np.random.Generator) -> TrialResult:
    """Simulate the deficit walk until it is erased or ``horizon`` effective rounds pass.

    Lost honest rounds never move the deficit, so rather than drawing them one
    at a time the trial draws each effective round's direction with
    probability q and the number of raw rounds it took from a geometric law.
    The resulting distribution is the same as drawing :class:`RoundOutcome`
    repeatedly and skipping the lost ones.
    """
    if params.z < 1:
        raise ValueError("run_trial needs z >= 1")
    q = params.q
    p_effective = params.q_w + (1.0 - params.q_w) * params.q_c
    goal = -1 if params.strict else 0

    steps = np.where(rng.random(params.horizon) < q, -1, 1)
    path = params.z + np.cumsum(steps)
    hits = np.flatnonzero(path == goal)
    if hits.size:
        n = int(hits[0]) + 1
        trajectory = path[:n]
        success_round: Optional[int] = n
    else:
        trajectory = path
        success_round = None
    if p_effective >= 1.0:
        raw = len(trajectory)
    else:
        raw = int(rng.geometric(p_effective, size=len(trajectory)).sum())
    return TrialResult(success_round is not None, success_round, trajectory, raw)


@dataclass
class EnsembleStats:
    """Aggregates over ``trials`` independent races.

    Per-round arrays have ``horizon + 1`` entries, index 0 being the start.
    ``mean_gap_active_by_round`` averages only over trials that have not yet
    succeeded (NaN once none remain).
    """

    trials: int
    successes: int
    empirical_success_prob: float
    cdf_by_round: np.ndarray
    mean_gap_by_round: np.ndarray
    mean_gap_active_by_round: np.ndarray
    active_fraction_by_round: np.ndarray
    mean_raw_rounds: float
    max_effective_rounds: int
    params: Optional[RaceParams] = field(default=None, repr=False)

    def standard_error(self) -> float:
        p = self.empirical_success_prob
        return math.sqrt(p * (1.0 - p) / self.trials)

    def to_dict(self) -> dict:
        def clean(arr):
            return [None if math.isnan(x) else float(x) for x in arr]

        return {
            "trials": self.trials,
            "successes": self.successes,
            "empirical_success_prob": self.empirical_success_prob,
            "mean_raw_rounds": self.mean_raw_rounds,
            "max_effective_rounds": self.max_effective_rounds,
            "cdf_by_round": clean(self.cdf_by_round),
            "mean_gap_by_round": clean(self.mean_gap_by_round),
            "mean_gap_active_by_round": clean(self.mean_gap_active_by_round),
            "active_fraction_by_round": clean(self.active_fraction_by_round),
        }


@dataclass
class _Tally:
    """Integer-valued partial sums, so merging chunks is exact and order-free."""

    horizon: int
    success_counts: np.ndarray = None
    gap_sum: np.ndarray = None
    active_gap_sum: np.ndarray = None
    active_count: np.ndarray = None
    tail_diff: np.ndarray = None
    raw_rounds: int = 0
    max_rounds: int = 0

    def __post_init__(self):
        n = self.horizon + 1
        for name in ("success_counts", "gap_sum", "active_gap_sum", "active_count"):
            if getattr(self, name) is None:
                setattr(self, name, np.zeros(n, dtype=np.int64))
        if self.tail_diff is None:
            self.tail_diff = np.zeros(n + 1, dtype=np.int64)

    def add(self, z: int, result: TrialResult) -> None:
        traj = result.gap_trajectory
        n = len(traj)
        self.gap_sum[0] += z
        self.gap_sum[1 : n + 1] += traj
        if result.success:
            s = result.success_round
            self.success_counts[s] += 1
            # rounds after absorption keep the final deficit
            self.tail_diff[s + 1] += traj[-1]
            self.active_count[:s] += 1
            self.active_gap_sum[0] += z
            self.active_gap_sum[1:s] += traj[: s - 1]
        else:
            self.active_count[:] += 1
            self.active_gap_sum[0] += z
            self.active_gap_sum[1 : n + 1] += traj
        self.raw_rounds += result.raw_rounds
        self.max_rounds = max(self.max_rounds, n)

    def merge(self, other: "_Tally") -> None:
        for name in ("success_counts", "gap_sum", "active_gap_sum", "active_count", "tail_diff"):
            getattr(self, name)[:] += getattr(other, name)
        self.raw_rounds += other.raw_rounds
        self.max_rounds = max(self.max_rounds, other.max_rounds)


def _run_chunk(params: RaceParams, master_seed: int, start: int, stop: int) -> _Tally:
    tally = _Tally(params.horizon)
    for t in range(start, stop):
        tally.add(params.z, run_trial(params, trial_rng(master_seed, t)))
    return tally


def run_ensemble(
    params: RaceParams, trials: int, master_seed: int, workers: int = 1
) -> EnsembleStats:
    """Run ``trials`` races; trial t uses :func:`trial_rng` (master_seed, t).

    The result depends only on (params, trials, master_seed), not on
    ``workers``.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    if workers > 1 and trials > 1:
        bounds = np.linspace(0, trials, min(workers, trials) * 4 + 1).astype(int)
        spans = [(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
        tally = _Tally(params.horizon)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_chunk, params, master_seed, a, b) for a, b in spans]
            for fut in futures:
                tally.merge(fut.result())
    else:
        tally = _run_chunk(params, master_seed, 0, trials)

    successes = int(tally.success_counts.sum())
    cdf = np.cumsum(tally.success_counts) / trials
    gap_sum = tally.gap_sum + np.cumsum(tally.tail_diff)[:-1]
    with np.errstate(invalid="ignore", divide="ignore"):
        active_mean = np.where(
            tally.active_count > 0, tally.active_gap_sum / np.maximum(tally.active_count, 1), np.nan
        )
    return EnsembleStats(
        trials=trials,
        successes=successes,
        empirical_success_prob=float(cdf[-1]),
        cdf_by_round=cdf,
        mean_gap_by_round=gap_sum / trials,
        mean_gap_active_by_round=active_mean,
        active_fraction_by_round=tally.active_count / trials,
        mean_raw_rounds=tally.raw_rounds / trials,
        max_effective_rounds=tally.max_rounds,
        params=params,
    )


def first_passage_cdf(q: float, z: int, horizon: int) -> np.ndarray:
    """Exact probability that a walk started at ``z`` has hit 0 within r steps, r = 0..horizon.

    Dynamic programming over (round, deficit); each step goes down with
    probability ``q`` and up otherwise. Deficits too large to return before
    the horizon are dropped since they cannot contribute.
    """
    _check_prob("q", q)
    if z < 1:
        raise ValueError("z must be at least 1")
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    up = 1.0 - q
    dist = np.zeros(z + horizon + 2)
    dist[z] = 1.0
    cdf = np.zeros(horizon + 1)
    absorbed = 0.0
    for r in range(1, horizon + 1):
        # live deficits before step r lie in [1, hi]
        hi = min(z + r - 1, horizon - r + 1)
        if hi < 1:
            cdf[r:] = absorbed
            break
        live = dist[1 : hi + 1].copy()
        absorbed += q * live[0]
        new = np.zeros(hi + 2)
        new[:hi] += q * live
        new[2:] += up * live
        new[0] = 0.0
        dist[: hi + 2] = new
        cdf[r] = absorbed
    return cdf


def markov_catch_up_oracle(q: float, z: int, horizon: int) -> float:
    """Exact catch-up probability within ``horizon`` effective rounds."""
    if horizon < z:
        warnings.warn("horizon shorter than the deficit: catch-up is unreachable", RuntimeWarning, stacklevel=2)
        return 0.0
    return float(first_passage_cdf(q, z, horizon)[-1])
