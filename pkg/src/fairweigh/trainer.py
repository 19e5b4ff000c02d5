"""Alternating optimization: fit steps, critic steps, and weight solves.

Each epoch runs mini-batch fit updates on the observational loss (two fit
steps per critic step), then refines the critic, evaluates the critic gap
d_k over the full training split, and re-solves the weights.  The first
epoch's critic updates see unit weights; the solved weights feed the next
epoch's weighted fit.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, asdict, replace

import numpy as np

from .autodiff import Tensor, backward
from .data import ColumnarDataset, Encoder, SplitPlan, split
from .effects import (
    EffectReport,
    MetricSummary,
    discriminator_gap,
    downstream_accuracy,
    estimate_effect,
    statistical_parity,
    wasserstein_distance,
)
from .graph import CausalGraph, PathSet
from .model import StructuredModel
from .nn import Adam, MomentumSGD, learning_rate
from .reweighter import WeightVector, solve_weights

__all__ = [
    "TrainingError",
    "TrainConfig",
    "EpochRecord",
    "train",
    "progress",
    "repeat_protocol",
    "write_log",
]


class TrainingError(RuntimeError):
    """Training aborted; parameters are rolled back to the last epoch boundary."""

    def __init__(self, message: str, epoch: int | None = None):
        super().__init__(message)
        self.epoch = epoch


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 640
    eta0: float = 0.001
    critic_lr: float = 1e-4
    momentum: float = 0.9
    fit_steps_per_critic_step: int = 2
    critic_steps_at_weight_solve: int = 50
    balance: float = 1.5
    penalty_coef: float = 10.0
    seed: int = 0
    hidden: tuple[int, ...] = (32, 32)
    critic_hidden: tuple[int, ...] = (32, 32, 32)
    lr_increasing: bool = False
    observational_cascade: bool = False
    schedule: str = "interleaved"  # or "phased": all fit steps, then critic steps

    def __post_init__(self):
        for name in ("epochs", "batch_size", "fit_steps_per_critic_step"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.critic_steps_at_weight_solve < 0:
            raise ValueError("critic_steps_at_weight_solve must be >= 0")
        if self.balance <= 0:
            raise ValueError("balance parameter must be positive")
        if self.schedule not in ("interleaved", "phased"):
            raise ValueError(f"unknown schedule {self.schedule!r}")


@dataclass
class EpochRecord:
    epoch: int
    fit_loss: float
    critic_objective: float
    gradient_penalty: float
    effect: float
    weight_deviation: float
    wall_time: float


def progress(completed_steps: int, total_steps: int) -> float:
    """Fraction of fit steps done, linear from 0 to 1."""
    if total_steps < 1 or not 0 <= completed_steps <= total_steps:
        raise ValueError(
            f"bad progress query: {completed_steps} of {total_steps} steps"
        )
    return completed_steps / total_steps


def _batches(m: int, batch_size: int, rng: np.random.Generator):
    perm = rng.permutation(m)
    for start in range(0, m, batch_size):
        yield perm[start : start + batch_size]


class _Loop:
    """Mutable training state shared by the per-epoch phases."""

    def __init__(self, model: StructuredModel, ds: ColumnarDataset, config: TrainConfig):
        if config.batch_size > ds.m:
            raise TrainingError(
                f"batch size {config.batch_size} exceeds sample count {ds.m}"
            )
        self.model = model
        self.ds = ds
        self.config = config
        self.x = model.encoder.transform(ds)
        self.weights = np.ones(ds.m)
        self.fit_params = model.params.parameters(model.sub_network_nodes)
        self.critic_params = model.params.parameters(["critic"])
        self.fit_opt = MomentumSGD(self.fit_params, config.eta0, config.momentum)
        self.critic_opt = Adam(self.critic_params, config.critic_lr)
        self.batch_rng = np.random.default_rng([config.seed, 0])
        self.penalty_rng = np.random.default_rng([config.seed, 1])
        self.refine_rng = np.random.default_rng([config.seed, 2])
        steps_per_epoch = -(-ds.m // config.batch_size)
        self.total_fit_steps = config.epochs * steps_per_epoch
        self.completed_fit_steps = 0
        self.last_critic_objective = 0.0
        self.last_penalty = 0.0

    def fit_step(self, idx: np.ndarray) -> float:
        loss = self.model.fit_loss(self.x[idx], self.weights[idx])
        if not np.isfinite(loss.data):
            raise FloatingPointError("non-finite fit loss")
        grads = backward(loss, self.fit_params)
        lr = learning_rate(
            self.config.eta0,
            progress(self.completed_fit_steps, self.total_fit_steps),
            increasing=self.config.lr_increasing,
        )
        self.fit_opt.step(grads, lr)
        self.completed_fit_steps += 1
        return float(loss.data)

    def critic_step(self, idx: np.ndarray) -> None:
        xb = self.x[idx]
        y_plus, y_minus, mask = self.model.interventional_pair(xb, self.ds.take(idx))
        if y_plus.size == 0:
            return
        wb = self.weights[idx]
        context = None
        if self.model.critic_context_nodes:
            context = self.model.critic_context(xb if mask is None else xb[mask])
        if mask is not None:
            wb = wb[mask]
        v_plus = self.model.critic_value(y_plus, context)
        v_minus = self.model.critic_value(y_minus, context)
        w_col = Tensor(wb.reshape(-1, 1))
        objective = (w_col * (v_plus - v_minus)).mean()
        penalty = self.model.gradient_penalty(y_plus, y_minus, self.penalty_rng, context)
        loss = -objective + self.config.penalty_coef * penalty
        grads = backward(loss, self.critic_params)
        self.critic_opt.step(grads)
        self.last_critic_objective = float(objective.data)
        self.last_penalty = float(penalty.data)

    def full_split_pair(self):
        y_plus, y_minus, mask = self.model.interventional_pair(self.x, self.ds)
        context = None
        if self.model.critic_context_nodes:
            context = self.model.critic_context(
                self.x if mask is None else self.x[mask]
            )
        return y_plus, y_minus, mask, context

    def orient_critic(self, pair) -> None:
        """Exploit the critic's sign symmetry: the penalty is invariant under
        negation, so when the weighted objective is negative the negated
        critic is a strictly better feasible maximizer.  Gradient steps cannot
        cross between the two basins once the penalty binds; this jump can."""
        y_plus, y_minus, mask, context = pair
        gap = self.model.critic_values(y_plus, context) - self.model.critic_values(
            y_minus, context
        )
        w = self.weights if mask is None else self.weights[mask]
        if float(w @ gap) < 0.0:
            weight, bias = self.model.params.group("critic")[-1]
            weight.data = -weight.data
            bias.data = -bias.data

    def solve_epoch_weights(self, pair) -> WeightVector:
        """Critic gap over the full split, then the constrained weight solve."""
        y_plus, y_minus, mask, context = pair
        gap = self.model.critic_values(y_plus, context) - self.model.critic_values(
            y_minus, context
        )
        solved = solve_weights(gap, self.config.balance)
        if mask is None:
            self.weights = solved.values.copy()
        else:
            # Conditioned mode: rows outside the condition keep weight one.
            self.weights = np.ones(self.ds.m)
            self.weights[mask] = solved.values
        return WeightVector(self.weights.copy(), self.config.balance)


def train(
    model: StructuredModel, ds: ColumnarDataset, config: TrainConfig
) -> tuple[StructuredModel, WeightVector, list[EpochRecord]]:
    """Run the full alternating scheme; returns the final feasible weights.

    Aborts on a non-finite loss or gradient, restoring the last epoch-boundary
    parameter snapshot before raising.
    """
    loop = _Loop(model, ds, config)
    log: list[EpochRecord] = []
    weight_vector = WeightVector(np.ones(ds.m), config.balance)
    snapshot = model.params.snapshot()

    for epoch in range(config.epochs):
        started = time.perf_counter()
        losses: list[float] = []
        try:
            for i, idx in enumerate(_batches(ds.m, config.batch_size, loop.batch_rng)):
                losses.append(loop.fit_step(idx))
                interleave = config.schedule == "interleaved"
                if interleave and (i + 1) % config.fit_steps_per_critic_step == 0:
                    loop.critic_step(idx)
            if config.schedule == "phased":
                n_critic = max(1, len(losses) // config.fit_steps_per_critic_step)
                for _ in range(n_critic):
                    idx = loop.refine_rng.choice(
                        ds.m, size=min(config.batch_size, ds.m), replace=False
                    )
                    loop.critic_step(idx)
            pair = loop.full_split_pair()
            loop.orient_critic(pair)
            for _ in range(config.critic_steps_at_weight_solve):
                idx = loop.refine_rng.choice(
                    ds.m, size=min(config.batch_size, ds.m), replace=False
                )
                loop.critic_step(idx)
            weight_vector = loop.solve_epoch_weights(pair)
        except FloatingPointError as exc:
            model.params.restore(snapshot)
            raise TrainingError(
                f"non-finite value during epoch {epoch}; rolled back to epoch "
                f"{epoch - 1} checkpoint",
                epoch=epoch,
            ) from exc
        snapshot = model.params.snapshot()
        effect = estimate_effect(model, ds, loop.x, loop.weights)
        log.append(
            EpochRecord(
                epoch=epoch,
                fit_loss=float(np.mean(losses)),
                critic_objective=loop.last_critic_objective,
                gradient_penalty=loop.last_penalty,
                effect=effect,
                weight_deviation=float(np.sum((loop.weights - 1.0) ** 2)),
                wall_time=time.perf_counter() - started,
            )
        )
    return model, weight_vector, log


def write_log(log: list[EpochRecord], path) -> None:
    """One JSON object per epoch, line-delimited."""
    with open(path, "w", encoding="utf-8") as fh:
        for record in log:
            fh.write(json.dumps(asdict(record), sort_keys=True) + "\n")


def repeat_protocol(
    ds: ColumnarDataset,
    graph: CausalGraph,
    mode: PathSet,
    config: TrainConfig,
    repeats: int = 5,
    tau: float = 0.05,
    train_fraction: float = 0.8,
    declared_levels: dict | None = None,
    compute_wasserstein: bool = True,
    wasserstein_steps: int = 2000,
    compute_accuracy: bool = True,
    critic_context_nodes: tuple[str, ...] = (),
) -> tuple[EffectReport, list[dict]]:
    """Independent train/test splits, one full training run per repetition.

    Every repetition re-splits the data (same base seed, its own repetition
    index), refits the encoder on the training side only, trains from a fresh
    initialization, and measures: the mode's effect and the critic-gap
    diagnostic on the reweighted training split, statistical parity under the
    weights, downstream accuracy on the held-out split, and the critic-based
    distance between the original and reweighted training data.  Metrics are
    aggregated as mean and (population) standard deviation.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    effects, gaps, parities, accuracies, distances = [], [], [], [], []
    artifacts: list[dict] = []
    for rep in range(repeats):
        plan = SplitPlan(config.seed, train_fraction, rep)
        train_ds, test_ds = split(ds, plan)
        encoder = Encoder().fit(train_ds, declared_levels)
        rep_config = replace(config, seed=config.seed + rep)
        model = StructuredModel(
            graph,
            encoder,
            mode,
            seed=rep_config.seed,
            hidden=rep_config.hidden,
            critic_hidden=rep_config.critic_hidden,
            observational_cascade=rep_config.observational_cascade,
            critic_context_nodes=critic_context_nodes,
        )
        model, weight_vector, log = train(model, train_ds, rep_config)
        w = weight_vector.values
        x_train = encoder.transform(train_ds)
        effects.append(estimate_effect(model, train_ds, x_train, w))
        gaps.append(discriminator_gap(model, train_ds, w, x_train))
        parities.append(
            statistical_parity(
                train_ds, graph.sensitive, graph.outcome, w, declared_levels
            )
        )
        if compute_accuracy:
            accuracies.append(
                downstream_accuracy(train_ds, test_ds, graph.outcome, w, encoder)
            )
        if compute_wasserstein:
            distances.append(
                wasserstein_distance(
                    train_ds,
                    train_ds.replace_weights(w),
                    encoder,
                    seed=rep_config.seed,
                    steps=wasserstein_steps,
                )
            )
        artifacts.append(
            {
                "repetition": rep,
                "model": model,
                "encoder": encoder,
                "weights": w,
                "log": log,
                "train": train_ds,
                "test": test_ds,
            }
        )
    report = EffectReport(
        mode=mode.mode,
        effect=MetricSummary.of(effects),
        critic_gap=MetricSummary.of(gaps),
        wasserstein=MetricSummary.of(distances) if distances else None,
        parity=MetricSummary.of(parities),
        accuracy=MetricSummary.of(accuracies) if accuracies else None,
        threshold=tau,
    )
    return report, artifacts
