"""Sampling-based estimation of the mean objective cost of uncertainty.

MOCU of a class is estimated as (max_j ξ(a_j)) − mean_i ξ(a_i) over K
sampled coupling vectors; the expected remaining MOCU of a pairwise
experiment mixes the conditional MOCU of its two possible outcomes by
their probabilities.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .control import SearchConfig, SyncPredicate, find_xi_batch
from .errors import InconsistentObservationError
from .model import pair_list, pair_to_flat
from .uncertainty import (
    ExperimentOutcome,
    UncertaintyClass,
    outcome_probability,
    pairwise_sync_threshold,
    sample,
    update_class,
)

EXCLUDED_WARN_FRACTION = 1e-3


@dataclass(frozen=True)
class MocuEstimate:
    """One sampling-based MOCU estimate.

    `stderr` is the Monte-Carlo standard error of the sample-mean term
    (std(ξ)/√K), the dominant noise component; `excluded` counts samples
    dropped because no synchronizing coupling was found.
    """

    value: float
    xi_star: float
    xi_mean: float
    K: int
    seed: int
    backend: str
    stderr: float = 0.0
    excluded: int = 0
    predicate_calls: int = 0
    warning: str | None = None


@dataclass(frozen=True)
class ExperimentScore:
    pair: tuple[int, int]
    remaining_mocu: float
    p_sync: float
    mocu_sync: float | None
    mocu_nosync: float | None
    informative: bool


def _xi_values(uclass: UncertaintyClass, predicate: SyncPredicate, K: int,
               seed: int, search: SearchConfig) -> tuple[np.ndarray, int, int]:
    A = sample(uclass, K, seed)
    res = find_xi_batch(A, predicate, search)
    xi = res.xi[res.ok]
    return xi, int((~res.ok).sum()), res.predicate_calls


def _estimate_from_xi(xi: np.ndarray, K: int, seed: int, backend: str,
                      excluded: int, calls: int) -> MocuEstimate:
    if xi.size == 0:
        raise InconsistentObservationError(
            "all samples were excluded as unsynchronizable")
    xi_star = float(xi.max())
    xi_mean = float(xi.mean())
    warning = None
    if excluded > EXCLUDED_WARN_FRACTION * K:
        warning = (f"{excluded} of {K} samples excluded as unsynchronizable; "
                   "estimate uses the remainder")
    stderr = float(xi.std(ddof=1) / np.sqrt(xi.size)) if xi.size > 1 else 0.0
    return MocuEstimate(xi_star - xi_mean, xi_star, xi_mean, K, seed, backend,
                        stderr, excluded, calls, warning)


def estimate_mocu(uclass: UncertaintyClass, predicate: SyncPredicate,
                  K: int, seed: int, search: SearchConfig | None = None,
                  backend: str = "ode") -> MocuEstimate:
    """MOCU of the class: sample K coupling vectors, search each one's
    minimal synchronizing coupling, return max − mean."""
    if K < 1:
        raise ValueError("K must be >= 1")
    search = search or SearchConfig()
    xi, excluded, calls = _xi_values(uclass, predicate, K, seed, search)
    return _estimate_from_xi(xi, K, seed, backend, excluded, calls)


def conditional_mocu(uclass: UncertaintyClass, pair: tuple[int, int],
                     synchronized: bool, predicate: SyncPredicate, K: int,
                     seed: int, search: SearchConfig | None = None,
                     backend: str = "ode") -> MocuEstimate:
    """MOCU of the class reduced by one experimental outcome, estimated
    with fresh draws from the reduced class."""
    reduced = update_class(uclass, ExperimentOutcome(pair, synchronized))
    return estimate_mocu(reduced, predicate, K, seed, search, backend)


def expected_remaining_mocu(uclass: UncertaintyClass, pair: tuple[int, int],
                            predicate: SyncPredicate, K: int, seed: int,
                            search: SearchConfig | None = None,
                            backend: str = "ode") -> ExperimentScore:
    """R(i, j): probability-weighted MOCU after observing the pair's
    outcome; a zero-probability branch is skipped entirely."""
    p = outcome_probability(uclass, pair)
    m_sync = m_nosync = None
    if p > 0.0:
        m_sync = conditional_mocu(uclass, pair, True, predicate, K, seed,
                                  search, backend).value
    if p < 1.0:
        m_nosync = conditional_mocu(uclass, pair, False, predicate, K, seed,
                                    search, backend).value
    r = p * (m_sync or 0.0) + (1.0 - p) * (m_nosync or 0.0)
    return ExperimentScore(pair, float(r), float(p), m_sync, m_nosync,
                           _informative(uclass, pair))


def _informative(uclass: UncertaintyClass, pair: tuple[int, int]) -> bool:
    k = pair_to_flat(uclass.n, *pair)
    theta = pairwise_sync_threshold(uclass, pair)
    return bool(uclass.lower[k] < theta < uclass.upper[k])


@dataclass
class CrnScores:
    """Expected-remaining-MOCU scores for every pair, computed from one
    shared sample set (common random numbers).

    The parent ξ values are reused for both conditional branches, with
    each branch restricted to the samples consistent with the outcome and
    weighted by the empirical branch fraction.  Under this coupling,
    R(i, j) ≤ M(A) holds exactly for every pair.
    """

    parent: MocuEstimate
    scores: list[ExperimentScore]


def score_pairs_crn(uclass: UncertaintyClass, predicate: SyncPredicate,
                    K: int, seed: int, search: SearchConfig | None = None,
                    backend: str = "ode") -> CrnScores:
    search = search or SearchConfig()
    A = sample(uclass, K, seed)
    res = find_xi_batch(A, predicate, search)
    ok = res.ok
    xi = res.xi[ok]
    A_ok = A[ok]
    parent = _estimate_from_xi(xi, K, seed, backend,
                               int((~ok).sum()), res.predicate_calls)
    scores = []
    for pair in pair_list(uclass.n):
        k = pair_to_flat(uclass.n, *pair)
        theta = pairwise_sync_threshold(uclass, pair)
        sync_mask = A_ok[:, k] >= theta
        branches = {}
        for outcome, mask in ((True, sync_mask), (False, ~sync_mask)):
            if mask.any():
                sub = xi[mask]
                branches[outcome] = (float(sub.max() - sub.mean()),
                                     mask.mean())
        r = sum(val * frac for val, frac in branches.values())
        scores.append(ExperimentScore(
            pair, float(r),
            float(sync_mask.mean()),
            branches.get(True, (None, 0.0))[0],
            branches.get(False, (None, 0.0))[0],
            _informative(uclass, pair)))
    return CrnScores(parent, scores)


def rank_experiments(uclass: UncertaintyClass, predicate: SyncPredicate,
                     K: int, seed: int, search: SearchConfig | None = None,
                     backend: str = "ode", crn: bool = False
                     ) -> list[ExperimentScore]:
    """Score every pair by expected remaining MOCU, ascending; ties break
    lexicographically.  `crn=True` reuses one parent sample set for all
    pairs (variance-reduced; exact R ≤ M)."""
    if uclass.n < 2:
        raise ValueError("need at least two oscillators")
    if crn:
        scores = score_pairs_crn(uclass, predicate, K, seed, search, backend).scores
    else:
        scores = [expected_remaining_mocu(uclass, pair, predicate, K, seed,
                                          search, backend)
                  for pair in pair_list(uclass.n)]
    return sorted(scores, key=lambda s: (s.remaining_mocu, s.pair))


def scores_to_csv(scores: list[ExperimentScore], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["pair_i", "pair_j", "p_sync", "mocu_sync",
                         "mocu_nosync", "remaining_mocu"])
        for s in scores:
            writer.writerow([s.pair[0], s.pair[1], repr(s.p_sync),
                             "" if s.mocu_sync is None else repr(s.mocu_sync),
                             "" if s.mocu_nosync is None else repr(s.mocu_nosync),
                             repr(s.remaining_mocu)])


def scores_to_json(scores: list[ExperimentScore]) -> list[dict]:
    return [{
        "pair": list(s.pair),
        "remaining_mocu": s.remaining_mocu,
        "p_sync": s.p_sync,
        "mocu_sync": s.mocu_sync,
        "mocu_nosync": s.mocu_nosync,
        "informative": s.informative,
    } for s in scores]
