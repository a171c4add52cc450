"""Plain gradient descent on the composite completion loss."""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from sclab.geometry.kdtree import KDTree
from sclab.losses import CompletionLevels, LossWeights, total_loss
from sclab.seedgen import autodiff as ad
from sclab.seedgen.data import ToyBatch, ToyExample, make_batch
from sclab.seedgen.model import Prediction, SeedGenConfig, SeedGenParams, forward


class TrainingDiverged(FloatingPointError):
    def __init__(self, step: int, value: float):
        super().__init__(f"loss became {value} at step {step}")
        self.step = step


def batch_loss(pred: Prediction, batch: ToyBatch, w: LossWeights = LossWeights(),
               selections: dict | None = None) -> tuple[float, list[np.ndarray], list[dict]]:
    """Mean loss over the batch and its gradient for each of ``pred.outputs()``.

    Target normals for each predicted dense point come from its nearest
    ground-truth point; the assignment is held fixed for differentiation
    and, like the k-NN lookups in ``forward``, can be pinned via ``selections``.
    """
    B = len(batch.examples)
    outs = pred.outputs()
    grads = [np.zeros_like(t.data) for t in outs]
    total = 0.0
    terms = []
    for b, ex in enumerate(batch.examples):
        levels = [lv.data[b] for lv in pred.levels]
        normals = pred.normals.data[b]
        if selections is not None and f"normals{b}" in selections:
            nn = selections[f"normals{b}"]
        else:
            nn, _ = KDTree(ex.gt_levels[-1]).query(levels[-1])
            if selections is not None:
                selections[f"normals{b}"] = nn
        cl = CompletionLevels(levels, normals, pred.seeds.O.data[b])
        value, g = total_loss(cl, ex.gt_levels, ex.scan.points, ex.center, ex.gt_normals[nn], w)
        total += value
        terms.append(g.terms)
        grads[0][b] = g.center / B
        for j, gl in enumerate(g.levels):
            grads[1 + j][b] = gl / B
        grads[-1][b] = g.normals / B
    return total / B, grads, terms


def loss_and_grad(params: SeedGenParams, batch: ToyBatch, cfg: SeedGenConfig,
                  w: LossWeights = LossWeights(), selections: dict | None = None) -> float:
    """Forward + backward; parameter gradients are left in ``params[name].grad``."""
    params.zero_grad()
    pred = forward(batch.inputs, params, cfg, selections)
    value, grads, _ = batch_loss(pred, batch, w, selections)
    ad.backward(pred.outputs(), grads)
    return value


def batch_value(params: SeedGenParams, batch: ToyBatch, cfg: SeedGenConfig,
                w: LossWeights = LossWeights(), selections: dict | None = None) -> float:
    return batch_loss(forward(batch.inputs, params, cfg, selections), batch, w, selections)[0]


def _guarded(fn, step, *args):
    # non-finite coordinates are rejected by the k-d tree before a loss exists
    try:
        with np.errstate(over="ignore", invalid="ignore"):
            return fn(*args)
    except ValueError as exc:
        if "finite" not in str(exc):
            raise
        raise TrainingDiverged(step, float("nan")) from exc


def train_toy(dataset: list[ToyExample], cfg: SeedGenConfig, params: SeedGenParams | None = None,
              steps: int = 200, learning_rate: float = 0.01, seed: int = 0,
              w: LossWeights = LossWeights()) -> tuple[SeedGenParams, list[float]]:
    """Full-batch gradient descent; ``trace[k]`` is the loss before update ``k``
    and the last entry is the loss after the final update."""
    if steps < 0:
        raise ValueError("steps must be non-negative")
    params = SeedGenParams.init(cfg, seed) if params is None else params.copy()
    batch = make_batch(dataset, cfg)
    trace = []
    for step in range(steps):
        value = _guarded(loss_and_grad, step, params, batch, cfg, w)
        if not np.isfinite(value):
            raise TrainingDiverged(step, value)
        trace.append(value)
        for p in params.tensors.values():
            if p.grad is not None:
                p.data -= learning_rate * p.grad
    params.zero_grad()
    final = _guarded(batch_value, steps, params, batch, cfg, w)
    if not np.isfinite(final):
        raise TrainingDiverged(steps, final)
    trace.append(final)
    return params, trace


def write_trace(path, trace: list[float]) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["step", "loss"])
        for k, v in enumerate(trace):
            wr.writerow([k, repr(float(v))])


def read_trace(path) -> list[float]:
    with open(Path(path), newline="") as fh:
        return [float(r["loss"]) for r in csv.DictReader(fh)]
