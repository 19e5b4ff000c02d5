"""Causal-effect estimators and utility metrics over (re)weighted data.

Effect estimators are Monte-Carlo contrasts of the interventional forward
passes under the reweighted empirical distribution: weighted mean of the
outcome probability with the sensitive node clamped high minus the weighted
mean with it clamped low.  Rescaling all weights by a positive constant never
changes any estimate.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, backward, input_gradient, no_grad
from .data import ColumnarDataset, DataError, Encoder
from .model import StructuredModel
from .nn import Adam, ParamStore, mlp_forward

__all__ = [
    "total_effect",
    "path_specific_effect",
    "counterfactual_effect",
    "estimate_effect",
    "discriminator_gap",
    "wasserstein_estimate",
    "wasserstein_distance",
    "statistical_parity",
    "downstream_accuracy",
    "MetricSummary",
    "EffectReport",
]


def _normalized(weights: np.ndarray, m: int) -> np.ndarray:
    w = np.ones(m) if weights is None else np.asarray(weights, dtype=np.float64)
    if w.shape != (m,):
        raise ValueError(f"weights shape {w.shape} does not match m={m}")
    total = w.sum()
    if total <= 0:
        raise ValueError("weights must have positive total mass")
    return w / total


def _encoded(model: StructuredModel, ds: ColumnarDataset, x: np.ndarray | None):
    return model.encoder.transform(ds) if x is None else x


def total_effect(
    model: StructuredModel,
    ds: ColumnarDataset,
    weights: np.ndarray | None = None,
    x: np.ndarray | None = None,
) -> float:
    """Weighted mean outcome-probability contrast across all causal routes."""
    x = _encoded(model, ds, x)
    omega = _normalized(weights, ds.m)
    y_plus = model.intervene_total(x, 1)
    y_minus = model.intervene_total(x, 0)
    return float(omega @ y_plus - omega @ y_minus)


def path_specific_effect(
    model: StructuredModel,
    ds: ColumnarDataset,
    weights: np.ndarray | None = None,
    x: np.ndarray | None = None,
) -> float:
    """Contrast of the path-restricted intervention against the low reference."""
    x = _encoded(model, ds, x)
    omega = _normalized(weights, ds.m)
    y_pi = model.intervene_path_specific(x, 1)
    y_ref = model.intervene_total(x, 0)
    return float(omega @ y_pi - omega @ y_ref)


def counterfactual_effect(
    model: StructuredModel,
    ds: ColumnarDataset,
    weights: np.ndarray | None = None,
    x: np.ndarray | None = None,
) -> float:
    """Total contrast over the rows matching the model's condition, with the
    weights renormalized inside that sub-population."""
    x = _encoded(model, ds, x)
    y_plus, mask = model.intervene_conditioned(ds, x, 1)
    y_minus, _ = model.intervene_conditioned(ds, x, 0)
    w = np.ones(ds.m) if weights is None else np.asarray(weights, dtype=np.float64)
    omega = _normalized(w[mask], int(mask.sum()))
    return float(omega @ y_plus - omega @ y_minus)


def estimate_effect(
    model: StructuredModel,
    ds: ColumnarDataset,
    x: np.ndarray | None = None,
    weights: np.ndarray | None = None,
) -> float:
    """The effect matching the model's configured fairness mode."""
    if model.mode.mode == "total":
        return total_effect(model, ds, weights, x)
    if model.mode.mode == "path_specific":
        return path_specific_effect(model, ds, weights, x)
    return counterfactual_effect(model, ds, weights, x)


def discriminator_gap(
    model: StructuredModel,
    ds: ColumnarDataset,
    weights: np.ndarray | None = None,
    x: np.ndarray | None = None,
) -> float:
    """Diagnostic: weighted mean gap of critic outputs rescaled to [0, 1].

    Outputs for both interventional batches are min-max normalized against
    their pooled range; a degenerate (constant) critic yields 0 with a
    warning.  Reported alongside the direct estimators, never instead.
    """
    x = _encoded(model, ds, x)
    y_plus, y_minus, mask = model.interventional_pair(x, ds)
    context = None
    if model.critic_context_nodes:
        context = model.critic_context(x if mask is None else x[mask])
    d_plus = model.critic_values(y_plus, context)
    d_minus = model.critic_values(y_minus, context)
    pooled = np.concatenate([d_plus, d_minus])
    spread = float(pooled.max() - pooled.min())
    if spread < 1e-12:
        warnings.warn("critic output is constant; gap diagnostic degenerate")
        return 0.0
    low = pooled.min()
    w = np.ones(ds.m) if weights is None else np.asarray(weights, dtype=np.float64)
    if mask is not None:
        w = w[mask]
    omega = _normalized(w, w.size)
    return float(omega @ ((d_plus - low) / spread) - omega @ ((d_minus - low) / spread))


# -- distribution distance ------------------------------------------------------


def wasserstein_estimate(
    x_original: np.ndarray,
    x_reweighted: np.ndarray,
    weights: np.ndarray | None = None,
    seed: int = 0,
    steps: int = 2000,
    batch_size: int = 256,
    lr: float = 1e-3,
    penalty_coef: float = 10.0,
    hidden: tuple[int, ...] = (32, 32, 32),
) -> float:
    """Critic-based distance between an empirical and a reweighted matrix.

    Trains a fresh gradient-penalty critic on full encoded rows to maximize
    E_original[C] - E_weighted[C] for a fixed step budget, then returns the
    exact full-data objective of the trained critic.
    """
    x_a = np.asarray(x_original, dtype=np.float64)
    x_b = np.asarray(x_reweighted, dtype=np.float64)
    if x_a.ndim != 2 or x_b.ndim != 2 or x_a.shape[1] != x_b.shape[1]:
        raise ValueError("row matrices must be 2-D with a common column count")
    omega = _normalized(weights, x_b.shape[0])

    width = x_a.shape[1]
    store = ParamStore(seed)
    sizes = [(width, hidden[0])]
    sizes += [(hidden[i], hidden[i + 1]) for i in range(len(hidden) - 1)]
    sizes += [(hidden[-1], 1)]
    store.add_group("critic", sizes, zero_final=True)
    params = store.parameters(["critic"])
    opt = Adam(params, lr)
    rng = np.random.default_rng([seed, 3])

    batch = min(batch_size, x_a.shape[0], x_b.shape[0])
    for _ in range(steps):
        rows_a = x_a[rng.integers(0, x_a.shape[0], size=batch)]
        rows_b = x_b[rng.choice(x_b.shape[0], size=batch, p=omega)]
        value_a = mlp_forward(store.group("critic"), Tensor(rows_a), "linear")
        value_b = mlp_forward(store.group("critic"), Tensor(rows_b), "linear")
        u = rng.uniform(0.0, 1.0, size=(batch, 1))
        x_hat = Tensor(u * rows_a + (1.0 - u) * rows_b)
        critic_at = mlp_forward(store.group("critic"), x_hat, "linear")
        grad_x = input_gradient(critic_at.sum(), x_hat, create_graph=True)
        norm = ((grad_x * grad_x).sum(axis=1, keepdims=True) + 1e-24).sqrt()
        penalty = ((norm - 1.0) ** 2).mean()
        loss = value_b.mean() - value_a.mean() + penalty_coef * penalty
        if not np.isfinite(loss.data):
            raise FloatingPointError("distance critic diverged (non-finite loss)")
        opt.step(backward(loss, params))

    with no_grad():
        c_a = mlp_forward(store.group("critic"), Tensor(x_a), "linear").data[:, 0]
        c_b = mlp_forward(store.group("critic"), Tensor(x_b), "linear").data[:, 0]
    return float(c_a.mean() - omega @ c_b)


def wasserstein_distance(
    original: ColumnarDataset,
    reweighted: ColumnarDataset,
    encoder: Encoder | None = None,
    seed: int = 0,
    steps: int = 2000,
    **kwargs,
) -> float:
    """Dataset-level wrapper: encode both sides with one shared transform."""
    if original.names != reweighted.names:
        raise DataError("datasets must share a schema")
    enc = Encoder().fit(original) if encoder is None else encoder
    return wasserstein_estimate(
        enc.transform(original),
        enc.transform(reweighted),
        weights=reweighted.weights,
        seed=seed,
        steps=steps,
        **kwargs,
    )


# -- observational metrics -------------------------------------------------------


def _binary_indicator(
    ds: ColumnarDataset, name: str, declared: dict | None = None
) -> np.ndarray:
    col = ds.column(name)
    levels = sorted(set(col.values.tolist()) | set((declared or {}).get(name, ())))
    if col.kind != "categorical" or len(levels) != 2:
        raise DataError(f"column {name!r} is not binary (levels: {levels})")
    return (col.values == levels[-1]).astype(np.float64)


def statistical_parity(
    ds: ColumnarDataset,
    sensitive: str,
    outcome: str,
    weights: np.ndarray | None = None,
    declared_levels: dict | None = None,
) -> float:
    """Weighted P(Y=1 | S=1) - P(Y=1 | S=0), directly from the data."""
    s = _binary_indicator(ds, sensitive, declared_levels)
    y = _binary_indicator(ds, outcome, declared_levels)
    w = np.ones(ds.m) if weights is None else np.asarray(weights, dtype=np.float64)
    mass_high = float(w[s == 1].sum())
    mass_low = float(w[s == 0].sum())
    if mass_high <= 0 or mass_low <= 0:
        raise DataError("a sensitive group carries no weight")
    rate_high = float(w[s == 1] @ y[s == 1]) / mass_high
    rate_low = float(w[s == 0] @ y[s == 0]) / mass_low
    return rate_high - rate_low


def downstream_accuracy(
    train_ds: ColumnarDataset,
    test_ds: ColumnarDataset,
    outcome: str,
    weights: np.ndarray | None = None,
    encoder: Encoder | None = None,
    epochs: int = 500,
    lr: float = 0.1,
) -> float:
    """Test accuracy of a weighted logistic regression predicting the outcome.

    Plain full-batch gradient descent in float64, no regularization.  A loose
    final gradient norm only warns; the accuracy is returned regardless.
    """
    enc = Encoder().fit(train_ds) if encoder is None else encoder
    x_train = enc.transform(train_ds)
    x_test = enc.transform(test_ds)
    block = enc.block(outcome)
    feature_cols = [i for i in range(enc.width) if not block.start <= i < block.stop]
    y_train = x_train[:, block.start + 1]
    y_test = x_test[:, block.start + 1]
    a_train = x_train[:, feature_cols]
    a_test = x_test[:, feature_cols]

    omega = _normalized(weights, train_ds.m)
    theta = np.zeros(a_train.shape[1])
    intercept = 0.0
    grad_norm = np.inf
    for _ in range(epochs):
        z = a_train @ theta + intercept
        p = 1.0 / (1.0 + np.exp(-np.clip(z, -700, 700)))
        residual = omega * (p - y_train)
        grad_theta = a_train.T @ residual
        grad_intercept = float(residual.sum())
        theta -= lr * grad_theta
        intercept -= lr * grad_intercept
        grad_norm = float(np.sqrt(np.sum(grad_theta**2) + grad_intercept**2))
    if grad_norm > 5e-2:
        warnings.warn(
            f"logistic regression not fully converged (grad norm {grad_norm:.3g})"
        )
    predictions = (a_test @ theta + intercept) > 0.0
    return float(np.mean(predictions == (y_test > 0.5)))


# -- aggregation -----------------------------------------------------------------


@dataclass(frozen=True)
class MetricSummary:
    mean: float
    std: float
    values: tuple[float, ...]

    @classmethod
    def of(cls, values) -> "MetricSummary":
        arr = np.asarray(list(values), dtype=np.float64)
        std = float(arr.std(ddof=0)) if arr.size > 1 else 0.0
        return cls(float(arr.mean()), std, tuple(float(v) for v in arr))

    def render(self) -> str:
        return f"{self.mean:.4f} ({self.std:.4f})"


@dataclass(frozen=True)
class EffectReport:
    """Aggregated over repetitions; pass/fail compares |effect mean| to tau."""

    mode: str
    effect: MetricSummary
    critic_gap: MetricSummary
    wasserstein: MetricSummary | None
    parity: MetricSummary
    accuracy: MetricSummary | None
    threshold: float

    @property
    def passed(self) -> bool:
        return abs(self.effect.mean) < self.threshold

    def to_dict(self) -> dict:
        def pack(s):
            return None if s is None else {"mean": s.mean, "std": s.std, "values": list(s.values)}

        return {
            "mode": self.mode,
            "effect": pack(self.effect),
            "critic_gap": pack(self.critic_gap),
            "wasserstein": pack(self.wasserstein),
            "statistical_parity": pack(self.parity),
            "accuracy": pack(self.accuracy),
            "threshold": self.threshold,
            "passed": self.passed,
        }

    def render_table(self) -> str:
        rows = [
            ("mode", self.mode),
            ("effect", self.effect.render()),
            ("critic gap", self.critic_gap.render()),
            (
                "wasserstein",
                "-" if self.wasserstein is None else self.wasserstein.render(),
            ),
            ("statistical parity", self.parity.render()),
            ("accuracy", "-" if self.accuracy is None else self.accuracy.render()),
            ("threshold", f"{self.threshold:g}"),
            ("fair", "yes" if self.passed else "no"),
        ]
        label_width = max(len(r[0]) for r in rows)
        return "\n".join(f"{label:<{label_width}}  {value}" for label, value in rows)
