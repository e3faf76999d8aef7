"""Box uncertainty over pairwise couplings and its belief updates.

The class holds per-pair intervals [lower, upper] under a uniform prior;
a pairwise synchronization experiment on (i, j) tightens the interval at
the threshold |ω_i − ω_j| / 2: synchronized raises the lower bound,
unsynchronized lowers the upper bound.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .errors import InconsistentObservationError
from .model import n_pairs, pair_list, pair_to_flat

SETUP_NAMES = ("five_osc", "seven_osc")


@dataclass(frozen=True)
class UncertaintyClass:
    """Fixed frequencies plus interval bounds on every pairwise coupling."""

    omega: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        omega = np.asarray(self.omega, dtype=float)
        lower = np.asarray(self.lower, dtype=float)
        upper = np.asarray(self.upper, dtype=float)
        m = n_pairs(omega.shape[0])
        if lower.shape != (m,) or upper.shape != (m,):
            raise ValueError(f"bound vectors must have length {m}")
        if np.any(lower < 0):
            raise ValueError("lower bounds must be nonnegative")
        if np.any(lower > upper):
            raise ValueError("lower bounds must not exceed upper bounds")
        for name, arr in (("omega", omega), ("lower", lower), ("upper", upper)):
            arr = arr.copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.omega.shape[0]

    @property
    def num_pairs(self) -> int:
        return self.lower.shape[0]

    def pairs(self) -> list[tuple[int, int]]:
        return pair_list(self.n)

    def width(self, pair: tuple[int, int]) -> float:
        k = pair_to_flat(self.n, *pair)
        return float(self.upper[k] - self.lower[k])

    def is_resolved(self, pair: tuple[int, int]) -> bool:
        return self.width(pair) == 0.0


@dataclass(frozen=True)
class ExperimentOutcome:
    """Observed result of a pairwise spontaneous-synchronization experiment."""

    pair: tuple[int, int]
    synchronized: bool

    def __post_init__(self):
        i, j = self.pair
        if not (1 <= i < j):
            raise ValueError(f"pair must satisfy 1 <= i < j, got ({i}, {j})")
        object.__setattr__(self, "pair", (int(i), int(j)))


def pairwise_sync_threshold(uclass: UncertaintyClass, pair: tuple[int, int]) -> float:
    """θ_ij = |ω_i − ω_j| / 2: an isolated pair locks iff a_ij ≥ θ_ij."""
    i, j = pair
    pair_to_flat(uclass.n, i, j)
    return abs(float(uclass.omega[i - 1] - uclass.omega[j - 1])) / 2.0


def outcome_probability(uclass: UncertaintyClass, pair: tuple[int, int]) -> float:
    """P(synchronized) under the uniform prior on [lower, upper]."""
    k = pair_to_flat(uclass.n, *pair)
    lo, hi = float(uclass.lower[k]), float(uclass.upper[k])
    theta = pairwise_sync_threshold(uclass, pair)
    if hi == lo:
        return 1.0 if lo >= theta else 0.0
    return float(np.clip((hi - theta) / (hi - lo), 0.0, 1.0))


def update_class(uclass: UncertaintyClass, outcome: ExperimentOutcome) -> UncertaintyClass:
    """Tighten the observed pair's interval at its sync threshold.

    Raises InconsistentObservationError when the outcome is impossible
    under the current bounds (synchronized with θ above the interval, or
    unsynchronized with θ below it).
    """
    k = pair_to_flat(uclass.n, *outcome.pair)
    theta = pairwise_sync_threshold(uclass, outcome.pair)
    lower = uclass.lower.copy()
    upper = uclass.upper.copy()
    if outcome.synchronized:
        if theta > upper[k]:
            raise InconsistentObservationError(
                f"pair {outcome.pair} observed synchronized, but its threshold "
                f"{theta:.6g} exceeds the upper bound {upper[k]:.6g}"
            )
        lower[k] = max(lower[k], theta)
    else:
        if theta < lower[k]:
            raise InconsistentObservationError(
                f"pair {outcome.pair} observed unsynchronized, but its threshold "
                f"{theta:.6g} is below the lower bound {lower[k]:.6g}"
            )
        upper[k] = min(upper[k], theta)
    return UncertaintyClass(uclass.omega, lower, upper)


def sample(uclass: UncertaintyClass, count: int, seed: int) -> np.ndarray:
    """Draw `count` coupling vectors uniformly from the box, shape (count, P).

    Each sample uses its own RNG substream keyed by (seed, index), so the
    result is independent of any batching or scheduling of the draws.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    width = uclass.upper - uclass.lower
    out = np.empty((count, uclass.num_pairs))
    for i in range(count):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i,)))
        out[i] = uclass.lower + width * rng.random(uclass.num_pairs)
    return out


# Published experimental setups: frequencies and bound vectors transcribed
# from the two benchmark configurations (five and seven oscillators).
def build_paper_class(setup: str) -> UncertaintyClass:
    payload = _load_setup(setup)
    return UncertaintyClass(
        np.asarray(payload["omega"], dtype=float),
        np.asarray(payload["lower"], dtype=float),
        np.asarray(payload["upper"], dtype=float),
    )


def true_coupling(setup: str) -> np.ndarray | None:
    """The benchmark's hidden true coupling vector, when one is published."""
    payload = _load_setup(setup)
    vec = payload.get("true_coupling")
    return None if vec is None else np.asarray(vec, dtype=float)


def _load_setup(setup: str) -> dict:
    if setup not in SETUP_NAMES:
        raise ValueError(f"unknown setup {setup!r}; expected one of {SETUP_NAMES}")
    ref = resources.files("kuramoto_oed").joinpath(f"setups/{setup}.json")
    return json.loads(ref.read_text())


def save_class(uclass: UncertaintyClass, path) -> None:
    payload = {
        "omega": uclass.omega.tolist(),
        "lower": uclass.lower.tolist(),
        "upper": uclass.upper.tolist(),
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def load_class(path) -> UncertaintyClass:
    with open(path) as fh:
        payload = json.load(fh)
    return class_from_dict(payload)


def class_from_dict(payload: dict) -> UncertaintyClass:
    return UncertaintyClass(
        np.asarray(payload["omega"], dtype=float),
        np.asarray(payload["lower"], dtype=float),
        np.asarray(payload["upper"], dtype=float),
    )
