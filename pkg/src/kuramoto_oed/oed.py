"""Sequential experiment-design campaigns over a hidden true model.

A campaign repeatedly picks a pairwise synchronization experiment (per
the chosen strategy), observes the outcome implied by the true model,
tightens the uncertainty class, and records the ground-truth MOCU of the
updated class.  Ground-truth MOCU always uses the ODE backend so that
strategies are compared on a common uncertainty scale, whichever backend
drove the selection.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .control import SearchConfig, SyncPredicate
from .errors import DesignSpaceExhaustedError
from .mocu import MocuEstimate, conditional_mocu, estimate_mocu, rank_experiments
from .model import pair_list, pair_to_flat
from .uncertainty import (
    ExperimentOutcome,
    UncertaintyClass,
    pairwise_sync_threshold,
    sample,
    update_class,
)

STRATEGY_KINDS = ("mocu_iterative", "mocu_static", "entropy", "random", "oracle")
SYNC_BOUNDARY_TOL = 1e-9

# Seed-substream purposes within a campaign step.
_SEL = 0
_GT = 1
_RND = 2


@dataclass(frozen=True)
class Strategy:
    kind: str
    backend: str = "ode"  # selection backend for the MOCU-driven kinds

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise ValueError(f"unknown strategy {self.kind!r}")
        if self.backend not in ("ode", "ml"):
            raise ValueError(f"unknown backend {self.backend!r}")


@dataclass(frozen=True)
class TrueModel:
    """The hidden coupling vector experiments are measured against."""

    omega: np.ndarray
    coupling: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "omega", np.asarray(self.omega, dtype=float))
        object.__setattr__(self, "coupling", np.asarray(self.coupling, dtype=float))


def true_model_from_class(uclass: UncertaintyClass,
                          coupling: np.ndarray) -> TrueModel:
    coupling = np.asarray(coupling, dtype=float)
    if np.any(coupling < uclass.lower - 1e-12) or np.any(coupling > uclass.upper + 1e-12):
        raise ValueError("true coupling vector must lie within the class bounds")
    return TrueModel(uclass.omega, coupling)


def draw_true_model(uclass: UncertaintyClass, seed: int) -> TrueModel:
    return TrueModel(uclass.omega, sample(uclass, 1, seed)[0])


def simulate_outcome(true_model: TrueModel, pair: tuple[int, int]) -> ExperimentOutcome:
    """Exact pairwise outcome: synchronized iff a_ij ≥ |ω_i − ω_j|/2,
    with couplings within 1e-9 of the threshold counted as synchronized
    (the lock condition is non-strict)."""
    i, j = pair
    k = pair_to_flat(true_model.omega.shape[0], i, j)
    theta = abs(float(true_model.omega[i - 1] - true_model.omega[j - 1])) / 2.0
    return ExperimentOutcome(pair, bool(true_model.coupling[k] >= theta - SYNC_BOUNDARY_TOL))


@dataclass
class StepRecord:
    step: int
    pair: tuple[int, int] | None
    synchronized: bool | None
    mocu: MocuEstimate
    wall_ms: float = 0.0
    backend_calls: int = 0

    def to_dict(self) -> dict:
        return {
            "step": self.step,
            "pair": None if self.pair is None else list(self.pair),
            "outcome": self.synchronized,
            "mocu": self.mocu.value,
            "stderr_mc": self.mocu.stderr,
            "wall_ms": self.wall_ms,
            "backend_calls": self.backend_calls,
        }


@dataclass
class Backends:
    """Predicates available to a campaign: the ODE route is mandatory
    (ground truth); the classifier route is optional."""

    ode: SyncPredicate
    ml: SyncPredicate | None = None

    def select(self, name: str) -> SyncPredicate:
        if name == "ode":
            return self.ode
        if name == "ml" and self.ml is not None:
            return self.ml
        raise ValueError(f"backend {name!r} not available")


@dataclass
class CampaignState:
    initial_class: UncertaintyClass
    uclass: UncertaintyClass
    strategy: Strategy
    seed: int
    step: int = 0
    history: list[StepRecord] = field(default_factory=list)
    performed: set[tuple[int, int]] = field(default_factory=set)
    static_ranking: list[tuple[int, int]] | None = None

    @property
    def trajectory(self) -> list[float]:
        return [rec.mocu.value for rec in self.history]

    def unperformed(self) -> list[tuple[int, int]]:
        return [p for p in pair_list(self.uclass.n) if p not in self.performed]


def _step_seed(seed: int, step: int, purpose: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=(step, purpose))
               .generate_state(1)[0])


def next_experiment(state: CampaignState, backends: Backends, K: int,
                    true_model: TrueModel | None = None,
                    search: SearchConfig | None = None) -> tuple[int, int]:
    """Choose the next pair under the campaign's strategy."""
    remaining = state.unperformed()
    if not remaining:
        raise DesignSpaceExhaustedError("every pair has been performed")
    strat = state.strategy
    if strat.kind == "mocu_iterative":
        ranking = rank_experiments(state.uclass, backends.select(strat.backend),
                                   K, _step_seed(state.seed, state.step, _SEL),
                                   search, strat.backend)
        order = [s.pair for s in ranking]
    elif strat.kind == "mocu_static":
        if state.static_ranking is None:
            ranking = rank_experiments(state.initial_class,
                                       backends.select(strat.backend), K,
                                       _step_seed(state.seed, 0, _SEL),
                                       search, strat.backend)
            state.static_ranking = [s.pair for s in ranking]
        order = state.static_ranking
    elif strat.kind == "entropy":
        order = sorted(remaining,
                       key=lambda p: (-state.uclass.width(p), p))
    elif strat.kind == "random":
        rng = np.random.default_rng(
            np.random.SeedSequence(state.seed, spawn_key=(state.step, _RND)))
        return remaining[int(rng.integers(len(remaining)))]
    elif strat.kind == "oracle":
        if true_model is None:
            raise ValueError("oracle strategy requires the true model")
        best = None
        sel_seed = _step_seed(state.seed, state.step, _SEL)
        for pair in remaining:
            outcome = simulate_outcome(true_model, pair)
            est = conditional_mocu(state.uclass, pair, outcome.synchronized,
                                   backends.select(strat.backend), K,
                                   sel_seed, search, strat.backend)
            key = (est.value, pair)
            if best is None or key < best[0]:
                best = (key, pair)
        return best[1]
    else:  # pragma: no cover - guarded by Strategy validation
        raise ValueError(strat.kind)
    for pair in order:
        if pair in state.performed:
            continue
        return pair
    raise DesignSpaceExhaustedError("every pair has been performed")


def run_campaign(initial_class: UncertaintyClass, true_model: TrueModel,
                 strategy: Strategy, num_steps: int, K: int, seed: int,
                 backends: Backends, search: SearchConfig | None = None,
                 ground_truth_K: int | None = None) -> CampaignState:
    """Run `num_steps` experiments; the recorded trajectory holds the
    initial MOCU plus one ground-truth (ODE-backend) estimate per update."""
    n = initial_class.n
    if num_steps > len(pair_list(n)):
        raise ValueError("num_steps exceeds the design space")
    gt_K = ground_truth_K or K
    state = CampaignState(initial_class, initial_class, strategy, seed)

    def gt_estimate(uclass, step):
        return estimate_mocu(uclass, backends.ode, gt_K,
                             _step_seed(seed, step, _GT), search, "ode")

    calls0 = backends.ode.calls + (backends.ml.calls if backends.ml else 0)
    t0 = time.perf_counter()
    first = gt_estimate(initial_class, 0)
    calls1 = backends.ode.calls + (backends.ml.calls if backends.ml else 0)
    state.history.append(StepRecord(0, None, None, first,
                                    (time.perf_counter() - t0) * 1e3,
                                    calls1 - calls0))
    for step in range(1, num_steps + 1):
        state.step = step
        t0 = time.perf_counter()
        calls_before = backends.ode.calls + (backends.ml.calls if backends.ml else 0)
        pair = next_experiment(state, backends, K, true_model, search)
        outcome = simulate_outcome(true_model, pair)
        state.uclass = update_class(state.uclass, outcome)
        state.performed.add(pair)
        est = gt_estimate(state.uclass, step)
        calls_after = backends.ode.calls + (backends.ml.calls if backends.ml else 0)
        state.history.append(StepRecord(step, pair, outcome.synchronized, est,
                                        (time.perf_counter() - t0) * 1e3,
                                        calls_after - calls_before))
    return state


def replay_history(initial_class: UncertaintyClass,
                   records: list[StepRecord]) -> UncertaintyClass:
    """Re-apply recorded outcomes; used to check the replay invariant."""
    uclass = initial_class
    for rec in records:
        if rec.pair is None:
            continue
        uclass = update_class(uclass, ExperimentOutcome(rec.pair, rec.synchronized))
    return uclass


def sequence_agreement(seq_a: list[tuple[int, int]],
                       seq_b: list[tuple[int, int]]) -> np.ndarray:
    """Entry k (1-based) counts the common pairs within the first k
    choices of the two sequences."""
    sa, sb = list(map(tuple, seq_a)), list(map(tuple, seq_b))
    if set(sa) != set(sb) or len(sa) != len(set(sa)) or len(sb) != len(set(sb)):
        raise ValueError("sequences must be permutations of one design space")
    out = np.empty(len(sa), dtype=int)
    for k in range(1, len(sa) + 1):
        out[k - 1] = len(set(sa[:k]) & set(sb[:k]))
    return out


def campaign_to_jsonl(state: CampaignState, path, extra_meta: dict | None = None) -> None:
    meta = {
        "type": "meta",
        "strategy": state.strategy.kind,
        "backend": state.strategy.backend,
        "seed": state.seed,
        "steps": state.step,
        "n": state.initial_class.n,
    }
    if extra_meta:
        meta.update(extra_meta)
    with open(path, "w") as fh:
        fh.write(json.dumps(meta) + "\n")
        for rec in state.history:
            fh.write(json.dumps(rec.to_dict()) + "\n")


def benchmark_speedup(uclass: UncertaintyClass, K: int, seeds: list[int],
                      backends: Backends, search: SearchConfig | None = None) -> dict:
    """Wall-time ratio of the classifier route over the ODE route for
    end-to-end expected-remaining-MOCU evaluations on identical workloads.
    Dataset generation and training are amortized offline and excluded."""
    from .mocu import expected_remaining_mocu

    if backends.ml is None:
        raise ValueError("benchmark requires a trained classifier backend")
    pairs = pair_list(uclass.n)
    ode_times, ml_times = [], []
    for seed in seeds:
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0xBE,)))
        pair = pairs[int(rng.integers(len(pairs)))]
        t0 = time.perf_counter()
        expected_remaining_mocu(uclass, pair, backends.ode, K, seed, search, "ode")
        ode_times.append(time.perf_counter() - t0)
        t0 = time.perf_counter()
        expected_remaining_mocu(uclass, pair, backends.ml, K, seed, search, "ml")
        ml_times.append(time.perf_counter() - t0)
    ode_s = float(np.mean(ode_times))
    ml_s = float(np.mean(ml_times))
    return {
        "ode_seconds": ode_s,
        "ml_seconds": ml_s,
        "ratio": ode_s / ml_s,
        "runs": len(seeds),
        "K": K,
    }
