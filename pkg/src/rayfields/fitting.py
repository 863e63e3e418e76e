"""Gradient fitting of scene parameters to RGB-D samples.

The loss landscape comes from losses.total_loss; gradients are closed-form
(losses._loss_eval) and cross-checked against central finite differences.
The optimizer is Adam with bias correction, a stepwise-halving learning
rate, global norm clipping, and a skip threshold for pathological steps.
After every step parameters are projected back into each kind's valid
domain (positive widths, colors in [0, 1]).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field as dc_field

import numpy as np

from .compose import CompositeScene
from .fields import GaussianBlobField, GroundPlaneField, SoftBoxField, SoftSphereField
from .losses import LossConfig, _BatchArrays, _loss_eval

__all__ = [
    "FitConfig",
    "FitReport",
    "FitDivergence",
    "loss_gradient",
    "finite_diff_gradient",
    "fit",
]

_MIN_WIDTH = 1e-3


class FitDivergence(RuntimeError):
    """Loss became non-finite; carries the iteration and offending term."""

    def __init__(self, iteration: int, term: str):
        super().__init__(f"non-finite loss at iteration {iteration} (term: {term})")
        self.iteration = iteration
        self.term = term


@dataclass(frozen=True)
class FitConfig:
    iterations: int = 2000
    batch_size: int = 512
    learning_rate: float = 4e-4
    decay_every: int = 100_000
    decay_factor: float = 0.5
    grad_clip_norm: float = 1.0
    skip_norm: float = 1000.0
    optimizer: str = "adam"
    seed: int = 0
    loss: LossConfig = dc_field(default_factory=LossConfig)

    def __post_init__(self):
        if self.iterations < 1 or self.batch_size < 1:
            raise ValueError("iterations and batch_size must be >= 1")
        if self.learning_rate <= 0 or self.decay_every < 1 or not 0 < self.decay_factor <= 1:
            raise ValueError("bad learning-rate schedule")
        if self.grad_clip_norm <= 0 or self.skip_norm <= 0:
            raise ValueError("grad_clip_norm and skip_norm must be positive")
        if self.optimizer != "adam":
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class FitReport:
    """Per-iteration loss trace plus the fitted scene.

    ``wall_clock_s`` is informational and deliberately left out of anything
    written to disk so identical seeds give identical files.
    """

    trace: list[dict]
    final_scene: CompositeScene
    final_params: np.ndarray
    seed: int
    skipped_steps: int
    wall_clock_s: float


class _Adam:
    def __init__(self, n: int, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.t = 0
        self.beta1, self.beta2, self.eps = beta1, beta2, eps

    def step(self, grad: np.ndarray, lr: float) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        return lr * m_hat / (np.sqrt(v_hat) + self.eps)


def _param_bounds(scene: CompositeScene) -> tuple[np.ndarray, np.ndarray]:
    """Per-parameter projection box keeping every kind inside its domain."""
    lo_parts, hi_parts = [], []
    for comp in scene.components:
        p = comp.n_params
        lo = np.full(p, -np.inf)
        hi = np.full(p, np.inf)
        if isinstance(comp, GaussianBlobField):
            lo[3:6] = _MIN_WIDTH        # scale
            lo[6] = 0.0                 # amplitude
            lo[7:10], hi[7:10] = 0.0, 1.0
        elif isinstance(comp, SoftSphereField):
            lo[3] = lo[4] = _MIN_WIDTH  # radius, softness
            lo[5] = 0.0
            lo[6:9], hi[6:9] = 0.0, 1.0
        elif isinstance(comp, SoftBoxField):
            lo[3:6] = _MIN_WIDTH        # half_size
            lo[6] = _MIN_WIDTH          # softness
            lo[7] = 0.0
            lo[8:11], hi[8:11] = 0.0, 1.0
        elif isinstance(comp, GroundPlaneField):
            lo[0] = _MIN_WIDTH          # softness
            lo[1] = 0.0                 # amplitude
            lo[2:8], hi[2:8] = 0.0, 1.0
            lo[8] = 0.0                 # checker_size
            lo[9] = _MIN_WIDTH          # dome_radius
            lo[10:13], hi[10:13] = 0.0, 1.0
        lo_parts.append(lo)
        hi_parts.append(hi)
    return np.concatenate(lo_parts), np.concatenate(hi_parts)


def loss_gradient(scene: CompositeScene, batch, iteration: int, config: LossConfig, rng) -> np.ndarray:
    """Analytic gradient of total_loss w.r.t. the concatenated scene params.

    Raises UnsupportedGradient if any component kind lacks gradients.
    """
    arrays = batch if isinstance(batch, _BatchArrays) else _BatchArrays.from_samples(batch)
    _, _, grad = _loss_eval(scene, arrays, iteration, config, rng, want_grads=True)
    return grad


def finite_diff_gradient(scene: CompositeScene, batch, iteration: int, config: LossConfig,
                         seed: int, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of total_loss sharing the seed with the
    analytic path (``seed`` must be an integer so draws replay)."""
    arrays = batch if isinstance(batch, _BatchArrays) else _BatchArrays.from_samples(batch)
    base = scene.params()
    grad = np.empty_like(base)
    for j in range(base.shape[0]):
        plus = base.copy()
        plus[j] += h
        minus = base.copy()
        minus[j] -= h
        up, _, _ = _loss_eval(scene.with_params(plus), arrays, iteration, config, seed, want_grads=False)
        dn, _, _ = _loss_eval(scene.with_params(minus), arrays, iteration, config, seed, want_grads=False)
        grad[j] = (up - dn) / (2.0 * h)
    return grad


def fit(initial_scene: CompositeScene, dataset, config: FitConfig) -> FitReport:
    """Stochastic fit of every scene parameter against RGB-D samples.

    Batches and loss draws derive from (seed, iteration), so identical
    inputs give an identical report (wall clock aside).
    """
    started = time.perf_counter()
    data = dataset if isinstance(dataset, _BatchArrays) else _BatchArrays.from_samples(dataset)
    n_data = len(data)
    scene = initial_scene
    params = scene.params()
    lo, hi = _param_bounds(scene)
    adam = _Adam(params.shape[0])
    batch_rng = np.random.default_rng(np.random.SeedSequence((config.seed, 1)))
    trace: list[dict] = []
    skipped = 0

    for it in range(config.iterations):
        idx = batch_rng.choice(n_data, size=min(config.batch_size, n_data), replace=False)
        loss_rng = np.random.default_rng(np.random.SeedSequence((config.seed, 2, it)))
        total, breakdown, grad = _loss_eval(scene, data.take(idx), it, config.loss, loss_rng, want_grads=True)
        if not np.isfinite(total):
            term = next((k for k, v in breakdown.items() if not np.isfinite(v)), "total")
            raise FitDivergence(it, term)
        if not np.all(np.isfinite(grad)):
            raise FitDivergence(it, "gradient")

        lr = config.learning_rate * config.decay_factor ** (it // config.decay_every)
        norm = float(np.linalg.norm(grad))
        skip = norm > config.skip_norm
        if skip:
            skipped += 1
        else:
            if norm > config.grad_clip_norm:
                grad = grad * (config.grad_clip_norm / norm)
            params = np.clip(params - adam.step(grad, lr), lo, hi)
            scene = scene.with_params(params)
        entry = dict(breakdown)
        entry.update(iteration=it, grad_norm=norm, learning_rate=lr, skipped=skip)
        trace.append(entry)

    return FitReport(
        trace=trace,
        final_scene=scene,
        final_params=params,
        seed=config.seed,
        skipped_steps=skipped,
        wall_clock_s=time.perf_counter() - started,
    )
