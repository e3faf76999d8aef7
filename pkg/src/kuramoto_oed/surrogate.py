"""Feature construction, long-horizon labeling, and dataset generation
for the synchronization classifier.

A training sample is a full control-augmented system: frequencies for
all n_total oscillators (the control's frequency included), the base
pairwise couplings, and the uniform control coupling c.  Features are
built after sorting oscillators by natural frequency in descending
order: the sorted frequencies, all pairwise |Δω|, and the couplings in
the same pair order.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import GenerationError, SchemaMismatchError
from .model import SimConfig, n_pairs
from .uncertainty import UncertaintyClass, build_paper_class

# Control frequency used when generating seven-oscillator training data;
# the published setup fixes it at the (rounded) mean of the seven.
SEVEN_OSC_CONTROL_FREQ = 1.0857


@dataclass(frozen=True)
class FeatureSchema:
    """Feature layout for a system of n_total oscillators (control included)."""

    n_total: int

    @property
    def feature_dim(self) -> int:
        return self.n_total + 2 * n_pairs(self.n_total)

    def to_dict(self) -> dict:
        return {"n_total": self.n_total, "feature_dim": self.feature_dim}


@dataclass(frozen=True)
class LabelingConfig:
    """Long-horizon oracle settings: a system is synchronized when the
    rounded instantaneous frequencies agree across oscillators AND the
    coherence r(t) has settled, both over the trailing window; the labels
    disagreeing means the sample is excluded."""

    duration_s: float = 400.0
    freq_round_decimals: int = 6
    stability_window_s: float = 20.0
    coherence_change_bound: float = 1e-6
    sample_rate_hz: float = 160.0

    def __post_init__(self):
        if self.stability_window_s > self.duration_s:
            raise ValueError("stability window must fit inside the duration")


SYNC_LABEL = "synchronized"
UNSYNC_LABEL = "unsynchronized"
EXCLUDED_LABEL = "excluded"

_LABEL_NAMES = {
    _kernels.SYNC: SYNC_LABEL,
    _kernels.UNSYNC: UNSYNC_LABEL,
    _kernels.EXCLUDED: EXCLUDED_LABEL,
    _kernels.DIVERGED: EXCLUDED_LABEL,  # excluded with reason: diverged
}


@dataclass(frozen=True)
class LabeledSample:
    features: np.ndarray
    label: bool
    omega: np.ndarray
    coupling: np.ndarray
    control: float


class Dataset:
    """Balanced labeled dataset with per-sample provenance."""

    def __init__(self, schema: FeatureSchema, features: np.ndarray,
                 labels: np.ndarray, omegas: np.ndarray,
                 couplings: np.ndarray, controls: np.ndarray):
        self.schema = schema
        self.features = features
        self.labels = labels.astype(bool)
        self.omegas = omegas
        self.couplings = couplings
        self.controls = controls

    def __len__(self) -> int:
        return self.features.shape[0]

    def samples(self):
        for k in range(len(self)):
            yield LabeledSample(self.features[k], bool(self.labels[k]),
                                self.omegas[k], self.couplings[k],
                                float(self.controls[k]))


def featurize(omega: np.ndarray, a: np.ndarray, c: float) -> np.ndarray:
    """Feature vector for one control-augmented system."""
    omega = np.asarray(omega, dtype=float)
    a = np.asarray(a, dtype=float)
    return featurize_batch(omega[None, :], a[None, :], np.array([float(c)]))[0]


def featurize_batch(omegas: np.ndarray, a: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Vectorized featurize: omegas (B, n_total), a (B, P_base), c (B,)."""
    omegas = np.asarray(omegas, dtype=float)
    a = np.asarray(a, dtype=float)
    c = np.asarray(c, dtype=float)
    B, n_total = omegas.shape
    n_base = n_total - 1
    if a.shape != (B, n_pairs(n_base)):
        raise SchemaMismatchError(
            f"expected base couplings of shape {(B, n_pairs(n_base))}, got {a.shape}")
    mats = np.zeros((B, n_total, n_total))
    iu_base = np.triu_indices(n_base, k=1)
    mats[:, iu_base[0], iu_base[1]] = a
    mats[:, iu_base[1], iu_base[0]] = a
    mats[:, :n_base, n_base] = c[:, None]
    mats[:, n_base, :n_base] = c[:, None]

    # Descending stable sort: sort ascending on -omega keeps original order
    # among exact ties.
    order = np.argsort(-omegas, axis=1, kind="stable")
    som = np.take_along_axis(omegas, order, axis=1)
    rows = np.arange(B)[:, None, None]
    pmats = mats[rows, order[:, :, None], order[:, None, :]]

    iu = np.triu_indices(n_total, k=1)
    dom = np.abs(som[:, iu[0]] - som[:, iu[1]])
    cop = pmats[:, iu[0], iu[1]]
    return np.concatenate([som, dom, cop], axis=1)


def label_oracle(omega: np.ndarray, a: np.ndarray, c: float,
                 config: LabelingConfig | None = None) -> str:
    """Label one system: 'synchronized', 'unsynchronized', or 'excluded'."""
    omega = np.asarray(omega, dtype=float)
    a = np.asarray(a, dtype=float)
    codes = label_oracle_batch(omega[None, :], a[None, :],
                               np.array([float(c)]), config)
    return codes[0]


def label_oracle_batch(omegas: np.ndarray, a: np.ndarray, c: np.ndarray,
                       config: LabelingConfig | None = None) -> list[str]:
    config = config or LabelingConfig()
    omegas = np.asarray(omegas, dtype=float)
    B, n_total = omegas.shape
    n_base = n_total - 1
    a = np.asarray(a, dtype=float)
    c = np.asarray(c, dtype=float)
    mats = np.zeros((B, n_total, n_total))
    iu_base = np.triu_indices(n_base, k=1)
    mats[:, iu_base[0], iu_base[1]] = a
    mats[:, iu_base[1], iu_base[0]] = a
    mats[:, :n_base, n_base] = c[:, None]
    mats[:, n_base, :n_base] = c[:, None]
    theta0 = np.zeros((B, n_total))

    fs = config.sample_rate_hz
    h = 1.0 / fs
    n_steps = int(round(config.duration_s * fs)) + 1
    win_lo = int(round((config.duration_s - config.stability_window_s) * fs))
    win_hi = int(round(config.duration_s * fs))
    codes = _kernels.label_batch(
        omegas, mats, theta0, h, n_steps, win_lo, win_hi,
        10.0 ** (-config.freq_round_decimals), config.coherence_change_bound)
    return [_LABEL_NAMES[int(code)] for code in codes]


def expansion_cap(uclass: UncertaintyClass, sim: SimConfig | None = None) -> float:
    """Upper end of the bisection bracket after expansion on the class's
    upper-bound coupling vector; used as the control-coupling sampling cap."""
    from .control import SearchConfig, make_ode_predicate

    pred = make_ode_predicate(uclass.omega, sim or SimConfig())
    cfg = SearchConfig()
    upper = pred.auto_upper()
    a = uclass.upper[None, :]
    for _ in range(cfg.max_expansions + 1):
        if pred.batch(a, np.array([upper]))[0]:
            return upper
        upper *= 2.0
    raise GenerationError("class upper-bound vector never synchronized "
                          "within the expansion budget")


def _draw_five_osc_random(rng: np.random.Generator):
    """Broad-coverage draw: random frequencies for all six oscillators,
    base couplings uniform between 0.25x and 2.35x each pair's sync
    threshold 0.5|Δω|, control coupling uniform up to 2.35x the widest
    control-pair threshold."""
    omega = rng.uniform(-2 * np.pi, 2 * np.pi, 6)
    iu = np.triu_indices(5, k=1)
    thr = 0.5 * np.abs(omega[iu[0]] - omega[iu[1]])
    a = rng.uniform(0.25 * thr, 2.35 * thr)
    c_cap = 2.35 * 0.5 * np.max(np.abs(omega[:5] - omega[5]))
    c = rng.uniform(0.0, c_cap)
    return omega, a, c


def _draw_class_anchored(rng: np.random.Generator, uclass: UncertaintyClass,
                         control_freq: float, c_cap: float):
    """Class-anchored draw: the setup's fixed frequencies, couplings
    uniform on the uncertainty-class box, control coupling uniform over
    the bisection's search range.  This is the draw the search actually
    queries, so it densely covers the classifier's decision region."""
    omega = np.append(uclass.omega, control_freq)
    a = rng.uniform(uclass.lower, uclass.upper)
    c = rng.uniform(0.0, c_cap)
    return omega, a, c


def generate_dataset(setup: str, per_class_count: int, seed: int,
                     labeling: LabelingConfig | None = None,
                     batch_size: int = 200,
                     max_attempts: int | None = None) -> Dataset:
    """Rejection-sample labeled systems until both classes reach
    `per_class_count`; excluded samples are dropped.  Deterministic given
    the seed: draw k always comes from substream (seed, k), independent of
    batching.
    """
    if per_class_count < 1:
        raise ValueError("per_class_count must be >= 1")
    if setup == "five_osc":
        # Alternate the broad random-frequency draw with the class-anchored
        # one: the former covers generic six-oscillator systems, the latter
        # the region the bisection search actually visits for this setup.
        n_total = 6
        uclass = build_paper_class("five_osc")
        cap = expansion_cap(uclass)
        cfreq = float(uclass.omega.mean())

        def draw(rng, attempt):
            if attempt % 2 == 0:
                return _draw_five_osc_random(rng)
            return _draw_class_anchored(rng, uclass, cfreq, cap)
    elif setup == "seven_osc":
        n_total = 8
        uclass = build_paper_class("seven_osc")
        cap = expansion_cap(uclass)

        def draw(rng, attempt):
            return _draw_class_anchored(rng, uclass, SEVEN_OSC_CONTROL_FREQ, cap)
    else:
        raise ValueError(f"unknown setup {setup!r}")

    schema = FeatureSchema(n_total)
    budget = max_attempts or max(60 * per_class_count, 2000)
    kept: dict[bool, list[int]] = {True: [], False: []}
    omegas_all, coups_all, controls_all = [], [], []
    attempt = 0
    while (len(kept[True]) < per_class_count or
           len(kept[False]) < per_class_count):
        if attempt >= budget:
            raise GenerationError(
                f"attempt budget {budget} exhausted with "
                f"{len(kept[True])} synchronized / {len(kept[False])} "
                f"unsynchronized of {per_class_count} requested each")
        block = min(batch_size, budget - attempt)
        omegas = np.empty((block, n_total))
        coups = np.empty((block, n_pairs(n_total - 1)))
        controls = np.empty(block)
        for k in range(block):
            rng = np.random.default_rng(
                np.random.SeedSequence(seed, spawn_key=(attempt + k,)))
            omegas[k], coups[k], controls[k] = draw(rng, attempt + k)
        labels = label_oracle_batch(omegas, coups, controls, labeling)
        for k, label in enumerate(labels):
            if label == EXCLUDED_LABEL:
                continue
            is_sync = label == SYNC_LABEL
            if len(kept[is_sync]) >= per_class_count:
                continue
            kept[is_sync].append(len(omegas_all))
            omegas_all.append(omegas[k])
            coups_all.append(coups[k])
            controls_all.append(controls[k])
        attempt += block

    idx = np.array(sorted(kept[True] + kept[False]), dtype=int)
    omegas_arr = np.asarray(omegas_all)[idx]
    coups_arr = np.asarray(coups_all)[idx]
    controls_arr = np.asarray(controls_all)[idx]
    feats = featurize_batch(omegas_arr, coups_arr, controls_arr)
    labels_arr = np.zeros(len(idx), dtype=bool)
    pos = {orig: knew for knew, orig in enumerate(idx)}
    for orig in kept[True]:
        labels_arr[pos[orig]] = True
    return Dataset(schema, feats, labels_arr, omegas_arr, coups_arr, controls_arr)


def save_dataset(dataset: Dataset, csv_path, sidecar_path=None,
                 meta: dict | None = None) -> None:
    """CSV columns f_1..f_D,label plus a JSON sidecar (schema, counts,
    generation metadata) and a provenance CSV next to the features."""
    csv_path = str(csv_path)
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        D = dataset.schema.feature_dim
        writer.writerow([f"f_{k}" for k in range(1, D + 1)] + ["label"])
        for k in range(len(dataset)):
            writer.writerow([repr(float(v)) for v in dataset.features[k]] +
                            [int(dataset.labels[k])])
    prov_path = csv_path.rsplit(".", 1)[0] + ".provenance.csv"
    n_total = dataset.schema.n_total
    with open(prov_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"omega_{i}" for i in range(1, n_total + 1)] +
                        [f"a_{k}" for k in range(1, dataset.couplings.shape[1] + 1)] +
                        ["control"])
        for k in range(len(dataset)):
            writer.writerow([repr(float(v)) for v in dataset.omegas[k]] +
                            [repr(float(v)) for v in dataset.couplings[k]] +
                            [repr(float(dataset.controls[k]))])
    sidecar = {
        "schema": dataset.schema.to_dict(),
        "count": len(dataset),
        "per_class": int(dataset.labels.sum()),
        "features_csv": csv_path,
        "provenance_csv": prov_path,
    }
    if meta:
        sidecar.update(meta)
    with open(sidecar_path or csv_path.rsplit(".", 1)[0] + ".json", "w") as fh:
        json.dump(sidecar, fh, indent=2)
        fh.write("\n")


def load_dataset(csv_path) -> Dataset:
    csv_path = str(csv_path)
    rows = np.loadtxt(csv_path, delimiter=",", skiprows=1)
    feats, labels = rows[:, :-1], rows[:, -1].astype(bool)
    # Invert feature_dim = n + 2*C(n,2) = n^2 to recover the schema.
    n_total = int(round(np.sqrt(feats.shape[1])))
    schema = FeatureSchema(n_total)
    if schema.feature_dim != feats.shape[1]:
        raise SchemaMismatchError(
            f"feature dimension {feats.shape[1]} does not match any schema")
    prov_path = csv_path.rsplit(".", 1)[0] + ".provenance.csv"
    prov = np.loadtxt(prov_path, delimiter=",", skiprows=1)
    if prov.ndim == 1:
        prov = prov[None, :]
    omegas = prov[:, :n_total]
    coups = prov[:, n_total:-1]
    controls = prov[:, -1]
    return Dataset(schema, feats, labels, omegas, coups, controls)
