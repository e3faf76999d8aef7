"""Single-hidden-layer classifier trained from scratch with numpy.

Architecture: dense(feature_dim -> hidden) + ReLU + dense(hidden -> 1)
with a sigmoid read-out, trained on binary cross-entropy with the Adam
update rule.  Hidden width is a multiplier on the feature count (3x for
the five-oscillator preset, 4x for the seven-oscillator one).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import SchemaMismatchError
from .surrogate import Dataset, FeatureSchema

PRESET_HIDDEN_MULTIPLIER = {"five_osc": 3, "seven_osc": 4}


@dataclass
class SurrogateClassifier:
    schema: FeatureSchema
    W1: np.ndarray  # (feature_dim, hidden)
    b1: np.ndarray  # (hidden,)
    W2: np.ndarray  # (hidden,)
    b2: float

    @property
    def hidden_width(self) -> int:
        return self.W1.shape[1]

    def logits(self, X: np.ndarray) -> np.ndarray:
        X = self._check(X)
        h = np.maximum(X @ self.W1 + self.b1, 0.0)
        return h @ self.W2 + self.b2

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return _sigmoid(self.logits(X))

    def decide(self, X: np.ndarray) -> np.ndarray:
        """Boolean synchronization decision at the 0.5 probability threshold."""
        return self.logits(X) > 0.0

    def _check(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.schema.feature_dim:
            raise SchemaMismatchError(
                f"expected features of width {self.schema.feature_dim}, "
                f"got shape {X.shape}")
        return X

    def to_dict(self) -> dict:
        return {
            "schema": self.schema.to_dict(),
            "W1": self.W1.tolist(),
            "b1": self.b1.tolist(),
            "W2": self.W2.tolist(),
            "b2": float(self.b2),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "SurrogateClassifier":
        schema = FeatureSchema(int(payload["schema"]["n_total"]))
        return cls(schema,
                   np.asarray(payload["W1"], dtype=float),
                   np.asarray(payload["b1"], dtype=float),
                   np.asarray(payload["W2"], dtype=float),
                   float(payload["b2"]))


def save_classifier(clf: SurrogateClassifier, path) -> None:
    with open(path, "w") as fh:
        json.dump(clf.to_dict(), fh)
        fh.write("\n")


def load_classifier(path) -> SurrogateClassifier:
    with open(path) as fh:
        return SurrogateClassifier.from_dict(json.load(fh))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def bce_loss(logits: np.ndarray, y: np.ndarray) -> float:
    """Mean binary cross-entropy, computed stably from logits."""
    return float(np.mean(np.maximum(logits, 0.0) - logits * y +
                         np.log1p(np.exp(-np.abs(logits)))))


def loss_and_grads(clf: SurrogateClassifier, X: np.ndarray, y: np.ndarray):
    """BCE loss plus analytic gradients for every parameter."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    B = X.shape[0]
    z1 = X @ clf.W1 + clf.b1
    h = np.maximum(z1, 0.0)
    z = h @ clf.W2 + clf.b2
    loss = bce_loss(z, y)
    dz = (_sigmoid(z) - y) / B
    gW2 = h.T @ dz
    gb2 = float(dz.sum())
    dh = np.outer(dz, clf.W2)
    dz1 = dh * (z1 > 0.0)
    gW1 = X.T @ dz1
    gb1 = dz1.sum(axis=0)
    return loss, (gW1, gb1, gW2, gb2)


def init_classifier(schema: FeatureSchema, hidden_width: int,
                    seed: int) -> SurrogateClassifier:
    """Symmetric uniform init scaled by fan-in, deterministic in the seed."""
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0xA11,)))
    D = schema.feature_dim
    s1 = 1.0 / np.sqrt(D)
    s2 = 1.0 / np.sqrt(hidden_width)
    return SurrogateClassifier(
        schema,
        rng.uniform(-s1, s1, (D, hidden_width)),
        rng.uniform(-s1, s1, hidden_width),
        rng.uniform(-s2, s2, hidden_width),
        float(rng.uniform(-s2, s2)),
    )


@dataclass
class TrainReport:
    epochs_run: int
    final_accuracy: float
    reached_perfect: bool
    loss_per_epoch: list[float] = field(default_factory=list)


def _absorb_standardization(clf: SurrogateClassifier, mu: np.ndarray,
                            sd: np.ndarray) -> SurrogateClassifier:
    """Fold the input standardization (x - mu) / sd into the first layer,
    so the returned network consumes raw features."""
    W1 = clf.W1 / sd[:, None]
    b1 = clf.b1 - (mu / sd) @ clf.W1
    return SurrogateClassifier(clf.schema, W1, b1, clf.W2.copy(), clf.b2)


def train(dataset: Dataset, preset: str | None = None, seed: int = 0,
          hidden_multiplier: int | None = None, batch_size: int = 256,
          learning_rate: float = 1e-3, max_epochs: int = 2000,
          lr_patience: int = 1000, lr_floor: float = 1e-5
          ) -> tuple[SurrogateClassifier, TrainReport]:
    """Adam / minibatch training until the dataset is classified perfectly
    or the epoch cap is hit (the classifier is returned either way, with
    `reached_perfect` flagging the outcome).

    Inputs are standardized during optimization and the affine transform
    is folded back into the first layer, so the returned classifier works
    on raw features.  The learning rate halves whenever the error count
    has not improved for `lr_patience` epochs.
    """
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    if hidden_multiplier is None:
        if preset is None:
            raise ValueError("either preset or hidden_multiplier is required")
        hidden_multiplier = PRESET_HIDDEN_MULTIPLIER[preset]
    schema = dataset.schema
    hidden = hidden_multiplier * schema.feature_dim
    clf = init_classifier(schema, hidden, seed)

    raw = dataset.features.astype(float)
    mu = raw.mean(axis=0)
    sd = raw.std(axis=0)
    sd[sd == 0] = 1.0
    X = (raw - mu) / sd
    y = dataset.labels.astype(float)
    N = X.shape[0]
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0x5F,)))

    params = [clf.W1, clf.b1, clf.W2, np.array(clf.b2)]
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    t = 0
    lr = learning_rate
    best_err = N + 1
    stale = 0
    report = TrainReport(0, 0.0, False)

    for epoch in range(1, max_epochs + 1):
        order = rng.permutation(N)
        epoch_loss = 0.0
        for start in range(0, N, batch_size):
            idx = order[start:start + batch_size]
            loss, grads = loss_and_grads(clf, X[idx], y[idx])
            epoch_loss += loss * idx.size
            t += 1
            new = []
            for k, (p, g) in enumerate(zip(params, grads)):
                g = np.asarray(g, dtype=float)
                m[k] = beta1 * m[k] + (1 - beta1) * g
                v[k] = beta2 * v[k] + (1 - beta2) * g * g
                mhat = m[k] / (1 - beta1 ** t)
                vhat = v[k] / (1 - beta2 ** t)
                new.append(p - lr * mhat / (np.sqrt(vhat) + eps))
            clf.W1, clf.b1, clf.W2 = new[0], new[1], new[2]
            clf.b2 = float(new[3])
            params = [clf.W1, clf.b1, clf.W2, np.array(clf.b2)]
        report.loss_per_epoch.append(epoch_loss / N)
        errs = int((clf.decide(X) != dataset.labels).sum())
        report.epochs_run = epoch
        report.final_accuracy = 1.0 - errs / N
        if errs == 0:
            absorbed = _absorb_standardization(clf, mu, sd)
            if int((absorbed.decide(raw) != dataset.labels).sum()) == 0:
                report.reached_perfect = True
                report.final_accuracy = 1.0
                return absorbed, report
        if errs < best_err:
            best_err = errs
            stale = 0
        else:
            stale += 1
            if stale >= lr_patience and lr > lr_floor:
                lr = max(lr * 0.5, lr_floor)
                stale = 0
    absorbed = _absorb_standardization(clf, mu, sd)
    report.final_accuracy = float((absorbed.decide(raw) == dataset.labels).mean())
    report.reached_perfect = report.final_accuracy == 1.0
    return absorbed, report


def evaluate(clf: SurrogateClassifier, dataset: Dataset) -> dict:
    """Forward-pass metrics: accuracy plus confusion counts."""
    pred = clf.decide(dataset.features)
    truth = dataset.labels
    tp = int(np.sum(pred & truth))
    tn = int(np.sum(~pred & ~truth))
    fp = int(np.sum(pred & ~truth))
    fn = int(np.sum(~pred & truth))
    return {
        "accuracy": float((tp + tn) / max(len(dataset), 1)),
        "tp": tp, "tn": tn, "fp": fp, "fn": fn,
    }
