"""Kuramoto phase-oscillator models, RK4 integration, and sync detection.

Couplings are stored as the upper-triangular vector
[a_12, a_13, ..., a_1n, a_23, ..., a_{n-1,n}] of the symmetric coupling
matrix; pair indices are 1-based throughout the public API.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .errors import IntegrationDivergedError

TWO_PI = 2.0 * np.pi


def n_pairs(n: int) -> int:
    return n * (n - 1) // 2


def pair_list(n: int) -> list[tuple[int, int]]:
    """All oscillator pairs (i, j), 1-based, in coupling-vector order."""
    return [(i, j) for i in range(1, n + 1) for j in range(i + 1, n + 1)]


def pair_to_flat(n: int, i: int, j: int) -> int:
    """Flat index of pair (i, j) (1-based, i < j) in the coupling vector."""
    if not (1 <= i < j <= n):
        raise ValueError(f"invalid pair ({i}, {j}) for n={n}")
    i0, j0 = i - 1, j - 1
    return i0 * n - i0 * (i0 + 1) // 2 + (j0 - i0 - 1)


def coupling_matrix(n: int, coupling: np.ndarray) -> np.ndarray:
    """Expand an upper-triangular coupling vector to a symmetric matrix."""
    coupling = np.asarray(coupling, dtype=float)
    if coupling.shape != (n_pairs(n),):
        raise ValueError(
            f"coupling vector must have length {n_pairs(n)} for n={n}, "
            f"got {coupling.shape}"
        )
    mat = np.zeros((n, n))
    iu = np.triu_indices(n, k=1)
    mat[iu] = coupling
    mat[(iu[1], iu[0])] = coupling
    return mat


def coupling_vector(mat: np.ndarray) -> np.ndarray:
    """Upper-triangular vector of a symmetric coupling matrix."""
    n = mat.shape[0]
    return mat[np.triu_indices(n, k=1)].copy()


@dataclass(frozen=True)
class KuramotoModel:
    """A network of phase oscillators: dθ_i/dt = ω_i + Σ_j a_ij sin(θ_j − θ_i)."""

    omega: np.ndarray
    coupling: np.ndarray
    theta0: np.ndarray

    def __post_init__(self):
        omega = np.asarray(self.omega, dtype=float)
        coupling = np.asarray(self.coupling, dtype=float)
        theta0 = np.asarray(self.theta0, dtype=float)
        n = omega.shape[0]
        if coupling.shape != (n_pairs(n),):
            raise ValueError(
                f"expected {n_pairs(n)} couplings for {n} oscillators, "
                f"got {coupling.shape[0]}"
            )
        if np.any(coupling < 0):
            raise ValueError("coupling strengths must be nonnegative")
        if theta0.shape != (n,):
            raise ValueError("theta0 must have one phase per oscillator")
        if np.any((theta0 < 0) | (theta0 >= TWO_PI)):
            raise ValueError("initial phases must lie in [0, 2*pi)")
        for name, arr in (("omega", omega), ("coupling", coupling), ("theta0", theta0)):
            arr = arr.copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.omega.shape[0]

    def coupling_matrix(self) -> np.ndarray:
        return coupling_matrix(self.n, self.coupling)

    @classmethod
    def with_zero_phases(cls, omega, coupling) -> "KuramotoModel":
        return cls(np.asarray(omega, dtype=float), coupling,
                   np.zeros(len(omega)))


@dataclass(frozen=True)
class SimConfig:
    """Integration and synchronization-detection settings.

    `raw_increment=True` thresholds the raw one-step phase increments;
    the default subtracts the per-instant mean increment so that a group
    locked at a nonzero common frequency still counts as synchronized.
    """

    sample_rate_hz: float = 160.0
    duration_s: float = 5.0
    sync_window: tuple[float, float] = (2.5, 5.0)
    sync_threshold: float = 1e-3
    raw_increment: bool = False

    def __post_init__(self):
        if self.sample_rate_hz <= 0 or self.duration_s <= 0:
            raise ValueError("sample rate and duration must be positive")
        if self.sync_threshold <= 0:
            raise ValueError("sync threshold must be positive")
        lo, hi = self.sync_window
        if not (0 <= lo < hi <= self.duration_s):
            raise ValueError("sync window must lie within [0, duration]")

    @property
    def step(self) -> float:
        return 1.0 / self.sample_rate_hz

    @property
    def num_steps(self) -> int:
        """RK4 steps taken: one extra past duration so that the one-step
        increment is defined at every instant of the sync window."""
        return int(round(self.duration_s * self.sample_rate_hz)) + 1

    def window_step_range(self) -> tuple[int, int]:
        """Step indices whose increments fall inside the sync window."""
        lo, hi = self.sync_window
        k_lo = int(np.ceil(lo * self.sample_rate_hz - 1e-9))
        k_hi = int(np.floor(hi * self.sample_rate_hz + 1e-9))
        return k_lo, k_hi


@dataclass(frozen=True)
class Trajectory:
    """Phases over time; phases[i, k] = θ_i(t_k), raw (not wrapped mod 2π)."""

    times: np.ndarray
    phases: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        phases = np.asarray(self.phases, dtype=float)
        if phases.ndim != 2 or phases.shape[1] != times.shape[0]:
            raise ValueError("phases must be (n, len(times))")
        for name, arr in (("times", times), ("phases", phases)):
            arr = arr.copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.phases.shape[0]

    @property
    def step(self) -> float:
        return float(self.times[1] - self.times[0])


def augment_with_control(model: KuramotoModel, control_coupling: float) -> KuramotoModel:
    """Add the control oscillator: ω_{n+1} = mean(ω), coupled to every
    oscillator with strength `control_coupling`, initial phase 0."""
    if control_coupling < 0:
        raise ValueError("control coupling must be nonnegative")
    n = model.n
    omega = np.append(model.omega, np.mean(model.omega))
    mat = np.zeros((n + 1, n + 1))
    mat[:n, :n] = model.coupling_matrix()
    mat[:n, n] = control_coupling
    mat[n, :n] = control_coupling
    theta0 = np.append(model.theta0, 0.0)
    return KuramotoModel(omega, coupling_vector(mat), theta0)


def integrate_rk4(model: KuramotoModel, config: SimConfig) -> Trajectory:
    """Fixed-step RK4 integration at h = 1/sample_rate_hz.

    Raises IntegrationDivergedError (naming the step) if the state goes
    non-finite.
    """
    h = config.step
    steps = config.num_steps
    phases, bad_step = _kernels.trajectory_single(
        np.asarray(model.omega), model.coupling_matrix(),
        np.asarray(model.theta0), h, steps)
    if bad_step >= 0:
        raise IntegrationDivergedError(int(bad_step))
    times = np.arange(steps + 1) * h
    return Trajectory(times, phases)


def detect_sync(traj: Trajectory, config: SimConfig) -> bool:
    """Frequency-synchronization criterion over the configured window.

    True iff every one-step phase increment (minus the per-instant mean
    increment unless raw_increment is set) stays strictly below
    sync_threshold for every instant t of the window, with the increment
    at t taken forward to t + 1/f_s.
    """
    k_lo, k_hi = config.window_step_range()
    if k_hi + 1 >= traj.phases.shape[1] or k_lo < 0:
        raise ValueError(
            "trajectory does not cover the sync window plus one step "
            f"(need step index {k_hi + 1}, have {traj.phases.shape[1] - 1})"
        )
    seg = traj.phases[:, k_lo:k_hi + 2]
    inc = np.diff(seg, axis=1)
    if not config.raw_increment:
        inc = inc - inc.mean(axis=0, keepdims=True)
    return bool(np.max(np.abs(inc)) < config.sync_threshold)


def order_parameter(traj: Trajectory) -> np.ndarray:
    """Coherence r(t_k) = |mean_i exp(i θ_i(t_k))|, one value per sample."""
    z = np.exp(1j * traj.phases)
    return np.abs(z.mean(axis=0))


def save_model(model: KuramotoModel, path) -> None:
    payload = {
        "omega": model.omega.tolist(),
        "coupling": model.coupling.tolist(),
        "theta0": model.theta0.tolist(),
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def load_model(path) -> KuramotoModel:
    with open(path) as fh:
        payload = json.load(fh)
    return KuramotoModel(
        np.asarray(payload["omega"], dtype=float),
        np.asarray(payload["coupling"], dtype=float),
        np.asarray(payload["theta0"], dtype=float),
    )


def export_trajectory_csv(traj: Trajectory, path) -> None:
    """CSV with header t,theta_1,...,theta_n, one row per sample instant."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"theta_{i}" for i in range(1, traj.n + 1)])
        for k in range(traj.times.shape[0]):
            writer.writerow([repr(float(traj.times[k]))] +
                            [repr(float(v)) for v in traj.phases[:, k]])
