"""Softmax gate over stacked expert forecasts, with top-k sparse fusion.

The gate sees the flattened (H, E) matrix of expert forecasts and emits one
logit per expert. Training uses the full softmax against the window's rarity
label; at inference only the k largest weights are kept and renormalized.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import backbone as bb
from .dataset import RarityLevel, WindowSample, stack_windows
from .expert import ExpertModel, collapse_level, decompose_histories, expert_predict_batch
from .rng import ROUTER_INIT, ROUTER_SHUFFLE, substream

log = logging.getLogger(__name__)


@dataclass(eq=False)
class Router:
    """Gate network plus the fusion arity k."""

    gate: bb.Forecaster
    n_experts: int
    horizon: int
    k: int

    def __post_init__(self) -> None:
        if not 1 <= self.k <= self.n_experts:
            raise ValueError(f"Router: k must be in [1, {self.n_experts}], got {self.k}")
        if self.gate.input_len != self.horizon * self.n_experts:
            raise ValueError("Router: gate input must be horizon * n_experts")
        if self.gate.output_len != self.n_experts:
            raise ValueError("Router: gate output must be n_experts")


@dataclass(frozen=True)
class RouterTrainConfig:
    k: int = 2
    epochs: int = 20
    lr: float = 1e-3
    batch_size: int = 64
    hidden: int = 32
    class_weights: bool = False
    seed: int = 0


def softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _flatten_outputs(expert_outputs: np.ndarray, horizon: int, n_experts: int) -> np.ndarray:
    out = np.asarray(expert_outputs, dtype=np.float64)
    if out.shape[-2:] != (horizon, n_experts):
        raise ValueError(
            f"expected expert outputs shaped (..., {horizon}, {n_experts}), got {out.shape}"
        )
    return out.reshape(*out.shape[:-2], horizon * n_experts)


def gate_forward(router: Router, expert_outputs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Logits and softmax weights for one (H, E) matrix or a (N, H, E) batch."""
    feats = _flatten_outputs(expert_outputs, router.horizon, router.n_experts)
    logits = bb.forecast(router.gate, feats)
    return logits, softmax(logits)


def select_topk(alpha: np.ndarray, k: int) -> np.ndarray:
    """Keep the k largest weights (ties to the lower index), renormalized to sum 1.

    All other entries are exactly zero. k equal to the expert count returns
    the input weights unchanged apart from renormalization.
    """
    a = np.asarray(alpha, dtype=np.float64)
    if a.ndim != 1:
        raise ValueError("select_topk: expected a 1-d weight vector")
    if not 1 <= k <= a.size:
        raise ValueError(f"select_topk: k must be in [1, {a.size}], got {k}")
    order = np.argsort(-a, kind="stable")
    keep = order[:k]
    out = np.zeros_like(a)
    total = a[keep].sum()
    if total <= 0.0:
        raise ValueError("select_topk: selected weights sum to zero")
    out[keep] = a[keep] / total
    return out


def fuse(expert_outputs: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Per-step weighted sum of expert forecasts: (H, E) @ (E,) -> (H,)."""
    out = np.asarray(expert_outputs, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if out.ndim != 2 or w.shape != (out.shape[1],):
        raise ValueError("fuse: expected (H, E) outputs and (E,) weights")
    if abs(w.sum() - 1.0) > 1e-6:
        raise ValueError(f"fuse: weights must sum to 1, got {w.sum()!r}")
    return out @ w


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> float:
    """Mean softmax cross-entropy of (N, E) logits against integer labels."""
    z = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    y = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    zmax = z.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(z - zmax).sum(axis=1)) + zmax[:, 0]
    picked = z[np.arange(z.shape[0]), y]
    return float((logsumexp - picked).mean())


def stack_expert_outputs(
    experts: list[ExpertModel], histories: np.ndarray, components: np.ndarray | None = None
) -> np.ndarray:
    """Expert forecast tensor (N, H, E) on shared histories."""
    if components is None:
        first = experts[0]
        components = decompose_histories(histories, first.n_bands, first.mode, first.bank, first.gamma)
    cols = [expert_predict_batch(e, histories, components) for e in experts]
    return np.stack(cols, axis=-1)


def train_router(
    experts: list[ExpertModel],
    windows: list[WindowSample],
    cfg: RouterTrainConfig,
    components: np.ndarray | None = None,
) -> tuple[Router, list[dict]]:
    """Fit the gate to route windows to the expert of their rarity level.

    Experts stay frozen; training is full-softmax cross-entropy on the window
    labels (top-k applies at inference only). Returns the router and the
    per-epoch loss/accuracy curve; row 0 precedes any update.
    """
    if not windows:
        raise ValueError("train_router: no windows")
    n_experts = len(experts)
    hist, _, _, wlev = stack_windows(windows)
    labels = collapse_level(wlev, n_experts)
    horizon = experts[0].horizon

    present = set(int(v) for v in np.unique(labels))
    missing = [c for c in range(n_experts) if c not in present]
    if missing:
        names = ", ".join(RarityLevel(min(c, len(RarityLevel) - 1)).name for c in missing)
        log.warning("train_router: no training windows labeled %s", names)

    outputs = stack_expert_outputs(experts, hist, components)
    feats = _flatten_outputs(outputs, horizon, n_experts)
    n = feats.shape[0]

    sample_w = np.ones(n)
    if cfg.class_weights:
        counts = np.bincount(labels, minlength=n_experts).astype(np.float64)
        nonzero = counts > 0
        w_by_class = np.zeros(n_experts)
        w_by_class[nonzero] = n / (nonzero.sum() * counts[nonzero])
        sample_w = w_by_class[labels]

    kind = "mlp" if cfg.hidden > 0 else "linear"
    gate = bb.make_forecaster(
        kind, horizon * n_experts, n_experts, max(cfg.hidden, 1),
        substream(cfg.seed, ROUTER_INIT),
    )
    opt = bb.OptimizerState(lr=cfg.lr)
    shuffle_rng = substream(cfg.seed, ROUTER_SHUFFLE)
    router = Router(gate=gate, n_experts=n_experts, horizon=horizon, k=cfg.k)

    def curve_row(epoch: int) -> dict:
        logits = bb.forecast(gate, feats)
        acc = float((logits.argmax(axis=1) == labels).mean())
        return {"epoch": epoch, "ce": cross_entropy(logits, labels), "accuracy": acc}

    curve = [curve_row(0)]
    onehot = np.eye(n_experts)[labels]
    for epoch in range(1, cfg.epochs + 1):
        order = shuffle_rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            logits = bb.forecast(gate, feats[idx])
            probs = softmax(logits)
            w = sample_w[idx][:, None]
            dlogits = w * (probs - onehot[idx]) / idx.size
            grads = bb.backward(gate, feats[idx], dlogits)
            bb.step(gate, grads, opt)
        curve.append(curve_row(epoch))
    return router, curve


def route(router: Router, expert_outputs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Softmax weights and their top-k sparsification for one (H, E) matrix."""
    _, alpha = gate_forward(router, expert_outputs)
    return alpha, select_topk(alpha, router.k)


def pipeline_predict_batch(
    experts: list[ExpertModel],
    router: Router,
    histories: np.ndarray,
    components: np.ndarray | None = None,
    k: int | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Fused forecasts for stacked histories.

    Returns (predictions (N, H), alphas (N, E), sparse weights (N, E)).
    k overrides the router's stored arity for inference-time sweeps.
    """
    k = router.k if k is None else int(k)
    outputs = stack_expert_outputs(experts, np.atleast_2d(histories), components)
    _, alphas = gate_forward(router, outputs)
    sparse = np.stack([select_topk(a, k) for a in alphas])
    preds = np.einsum("nhe,ne->nh", outputs, sparse)
    return preds, alphas, sparse


def pipeline_predict(
    experts: list[ExpertModel], router: Router, history: np.ndarray
) -> np.ndarray:
    """End-to-end forecast (H,) for one raw history window."""
    x = np.asarray(history, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("pipeline_predict: expected a 1-d history")
    preds, _, _ = pipeline_predict_batch(experts, router, x[None, :])
    return preds[0]
