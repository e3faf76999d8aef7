"""Minimal synchronizing control coupling via bracketed bisection.

`find_xi` estimates ξ(a) = inf{c : predicate(a, c)} for a monotone
synchronization predicate.  Two predicate backends are provided: the ODE
route (integrate the augmented model and apply the windowed detector) and
the classifier route (featurize and threshold the trained network).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import IntegrationDivergedError, SchemaMismatchError, UnsynchronizableError
from .model import (
    KuramotoModel,
    SimConfig,
    augment_with_control,
    coupling_matrix,
    detect_sync,
    integrate_rk4,
    n_pairs,
)


@dataclass(frozen=True)
class SearchConfig:
    """Bisection settings for the minimal-coupling search."""

    tolerance: float = 2.5e-4
    initial_upper: float | None = None  # None = auto scale from frequencies
    max_expansions: int = 30

    def __post_init__(self):
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.initial_upper is not None and self.initial_upper <= 0:
            raise ValueError("initial_upper must be positive")


class SyncPredicate:
    """Decision procedure: does coupling vector `a` plus control coupling
    `c` yield a frequency-synchronized augmented system?

    Subclasses implement `batch`; `__call__` is the single-sample
    convenience.  Predicates are immutable and safe to share across
    threads.  `calls` counts individual (a, c) evaluations, for search
    telemetry.
    """

    omega: np.ndarray  # base oscillator frequencies, without the control

    def __init__(self):
        self.calls = 0

    def __call__(self, a: np.ndarray, c: float) -> bool:
        return bool(self.batch(np.asarray(a, dtype=float)[None, :],
                               np.array([float(c)]))[0])

    def batch(self, a: np.ndarray, c: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def reset_calls(self) -> None:
        self.calls = 0

    def auto_upper(self) -> float:
        """Two-body-inspired starting bracket: max_i |ω_i − mean(ω)|."""
        mean = float(np.mean(self.omega))
        return float(np.max(np.abs(self.omega - mean)))


class OdePredicate(SyncPredicate):
    """Synchronization decided by RK4 integration plus the windowed detector."""

    def __init__(self, omega: np.ndarray, sim: SimConfig):
        super().__init__()
        self.omega = np.asarray(omega, dtype=float)
        self.sim = sim
        n = self.omega.shape[0]
        self._omega_aug = np.append(self.omega, self.omega.mean())
        self._theta0 = np.zeros(n + 1)
        self._n = n

    def __call__(self, a: np.ndarray, c: float) -> bool:
        # Reference route: exactly detect_sync(integrate_rk4(augment(...))).
        self.calls += 1
        base = KuramotoModel.with_zero_phases(self.omega, np.asarray(a, dtype=float))
        traj = integrate_rk4(augment_with_control(base, float(c)), self.sim)
        return detect_sync(traj, self.sim)

    def batch(self, a: np.ndarray, c: np.ndarray) -> np.ndarray:
        B = a.shape[0]
        self.calls += B
        n = self._n
        if a.shape[1] != n_pairs(n):
            raise ValueError(f"expected coupling vectors of length {n_pairs(n)}")
        mats = np.zeros((B, n + 1, n + 1))
        iu = np.triu_indices(n, k=1)
        mats[:, iu[0], iu[1]] = a
        mats[:, iu[1], iu[0]] = a
        mats[:, :n, n] = c[:, None]
        mats[:, n, :n] = c[:, None]
        omegas = np.broadcast_to(self._omega_aug, (B, n + 1)).copy()
        theta0 = np.broadcast_to(self._theta0, (B, n + 1)).copy()
        k_lo, k_hi = self.sim.window_step_range()
        codes, steps = _kernels.sync_batch(
            omegas, mats, theta0, self.sim.step, self.sim.num_steps,
            k_lo, k_hi, self.sim.sync_threshold, self.sim.raw_increment)
        if np.any(codes == _kernels.DIVERGED):
            bad = int(np.argmax(codes == _kernels.DIVERGED))
            raise IntegrationDivergedError(int(steps[bad]))
        return codes == _kernels.SYNC


class MlPredicate(SyncPredicate):
    """Synchronization decided by the trained surrogate classifier."""

    def __init__(self, classifier, omega: np.ndarray):
        super().__init__()
        self.classifier = classifier
        self.omega = np.asarray(omega, dtype=float)
        n_total = self.omega.shape[0] + 1
        if classifier.schema.n_total != n_total:
            raise SchemaMismatchError(
                f"classifier expects {classifier.schema.n_total} oscillators, "
                f"predicate is for {n_total} (including control)"
            )
        self._omega_aug = np.append(self.omega, self.omega.mean())

    def batch(self, a: np.ndarray, c: np.ndarray) -> np.ndarray:
        from .surrogate import featurize_batch

        B = a.shape[0]
        self.calls += B
        omegas = np.broadcast_to(self._omega_aug, (B, self._omega_aug.shape[0]))
        feats = featurize_batch(omegas, a, c)
        return self.classifier.decide(feats)


def make_ode_predicate(omega: np.ndarray, sim: SimConfig | None = None) -> OdePredicate:
    return OdePredicate(omega, sim or SimConfig())


def make_ml_predicate(classifier, omega: np.ndarray) -> MlPredicate:
    return MlPredicate(classifier, omega)


@dataclass
class BatchSearchResult:
    xi: np.ndarray          # estimated minimal coupling per sample
    ok: np.ndarray          # False where expansion failed (unsynchronizable)
    predicate_calls: int    # total single evaluations spent


def find_xi(a: np.ndarray, predicate: SyncPredicate,
            config: SearchConfig | None = None) -> float:
    """Minimal synchronizing control coupling for one coupling vector.

    Returns the upper endpoint of the final bisection bracket (always a
    synchronizing value), within `tolerance` of the true infimum for a
    monotone predicate.  Returns 0.0 when the system synchronizes without
    control; raises UnsynchronizableError when bracket expansion fails.
    """
    res = find_xi_batch(np.asarray(a, dtype=float)[None, :], predicate, config)
    if not res.ok[0]:
        raise UnsynchronizableError(
            "no synchronizing coupling found within the expansion budget")
    return float(res.xi[0])


def find_xi_batch(a: np.ndarray, predicate: SyncPredicate,
                  config: SearchConfig | None = None) -> BatchSearchResult:
    """Vectorized `find_xi` over the rows of `a`.

    Every phase (zero test, exponential bracket expansion, bisection)
    evaluates the predicate on the still-active rows only, so the result
    matches per-sample `find_xi` while amortizing the backend's batch
    cost.
    """
    config = config or SearchConfig()
    a = np.asarray(a, dtype=float)
    B = a.shape[0]
    calls = 0

    xi = np.zeros(B)
    ok = np.ones(B, dtype=bool)

    sync_at_zero = predicate.batch(a, np.zeros(B))
    calls += B
    active = ~sync_at_zero
    if not active.any():
        return BatchSearchResult(xi, ok, calls)

    start = config.initial_upper if config.initial_upper is not None \
        else predicate.auto_upper()
    lo = np.zeros(B)
    hi = np.full(B, float(start))

    # Exponential expansion: double hi until the predicate holds there.
    expanding = active.copy()
    for _ in range(config.max_expansions + 1):
        if not expanding.any():
            break
        idx = np.flatnonzero(expanding)
        good = predicate.batch(a[idx], hi[idx])
        calls += idx.size
        done = idx[good]
        expanding[done] = False
        grow = idx[~good]
        lo[grow] = hi[grow]
        hi[grow] *= 2.0
    ok[expanding] = False
    active &= ok

    # Bisection until every active bracket is within tolerance.
    while True:
        wide = active & ((hi - lo) > config.tolerance)
        if not wide.any():
            break
        idx = np.flatnonzero(wide)
        mid = 0.5 * (lo[idx] + hi[idx])
        good = predicate.batch(a[idx], mid)
        calls += idx.size
        hi[idx[good]] = mid[good]
        lo[idx[~good]] = mid[~good]

    xi[active] = hi[active]
    xi[~ok] = np.nan
    return BatchSearchResult(xi, ok, calls)
