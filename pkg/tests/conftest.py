"""Shared fixtures.

Deterministic heavy artifacts (labeled datasets, trained classifiers)
are cached under .cache/ keyed by their generation parameters, so
repeated test runs skip the expensive long-horizon labeling; the
artifacts are bit-identical either way.
"""

import os
from pathlib import Path

import numpy as np
import pytest

from kuramoto_oed.nn import load_classifier, save_classifier, train
from kuramoto_oed.surrogate import generate_dataset, load_dataset, save_dataset

CACHE = Path(__file__).resolve().parent.parent / ".cache"


def cached_dataset(setup: str, per_class: int, seed: int):
    CACHE.mkdir(exist_ok=True)
    path = CACHE / f"{setup}_{per_class}_{seed}.csv"
    if path.exists():
        return load_dataset(path)
    ds = generate_dataset(setup, per_class_count=per_class, seed=seed)
    save_dataset(ds, path, meta={"setup": setup, "per_class_count": per_class,
                                 "seed": seed})
    return ds


def cached_classifier(setup: str, per_class: int, dseed: int,
                      train_seed: int = 7, max_epochs: int = 30000):
    CACHE.mkdir(exist_ok=True)
    path = CACHE / f"{setup}_{per_class}_{dseed}_clf.json"
    if path.exists():
        return load_classifier(path)
    ds = cached_dataset(setup, per_class, dseed)
    clf, report = train(ds, preset=setup, seed=train_seed,
                        max_epochs=max_epochs)
    if not report.reached_perfect:
        raise RuntimeError(
            f"classifier for {setup} did not reach 100% training accuracy "
            f"({report.final_accuracy:.4f} after {report.epochs_run} epochs)")
    save_classifier(clf, path)
    return clf


@pytest.fixture(scope="session")
def tiny_five_dataset():
    return cached_dataset("five_osc", 25, 1234)


@pytest.fixture(scope="session")
def five_classifier_small():
    """Desk-scale five_osc classifier for module tests (smaller than the
    acceptance-scale one)."""
    ds = cached_dataset("five_osc", 300, 42)
    CACHE.mkdir(exist_ok=True)
    path = CACHE / "five_osc_300_42_clf.json"
    if path.exists():
        return load_classifier(path)
    clf, report = train(ds, preset="five_osc", seed=7, max_epochs=20000)
    assert report.reached_perfect
    save_classifier(clf, path)
    return clf
