"""Small forecasting backbones with hand-rolled reverse-mode gradients.

Two kinds: a linear map and a one-hidden-layer tanh MLP. Both map a length-T
history to a length-H forecast. Weights are trained with Adam; everything is
plain float64 numpy so runs are bitwise reproducible for a fixed seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

KINDS = ("linear", "mlp")


@dataclass(eq=False)
class Forecaster:
    kind: str
    input_len: int
    output_len: int
    hidden: int
    params: dict[str, np.ndarray]

    def n_params(self) -> int:
        return sum(p.size for p in self.params.values())


def make_forecaster(
    kind: str, input_len: int, output_len: int, hidden: int = 32, rng: np.random.Generator | None = None
) -> Forecaster:
    """Fresh model with weights uniform in +-1/sqrt(fan_in) and zero biases."""
    if kind not in KINDS:
        raise ValueError(f"make_forecaster: kind must be one of {KINDS}, got {kind!r}")
    if input_len < 1 or output_len < 1:
        raise ValueError("make_forecaster: input_len and output_len must be positive")
    rng = rng if rng is not None else np.random.default_rng(0)

    def uniform(shape: tuple[int, ...], fan_in: int) -> np.ndarray:
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    if kind == "linear":
        params = {
            "w": uniform((output_len, input_len), input_len),
            "b": np.zeros(output_len),
        }
        hidden = 0
    else:
        if hidden < 1:
            raise ValueError("make_forecaster: mlp needs hidden >= 1")
        params = {
            "w1": uniform((hidden, input_len), input_len),
            "b1": np.zeros(hidden),
            "w2": uniform((output_len, hidden), hidden),
            "b2": np.zeros(output_len),
        }
    return Forecaster(kind=kind, input_len=input_len, output_len=output_len, hidden=hidden, params=params)


def _check_input(model: Forecaster, history: np.ndarray) -> np.ndarray:
    x = np.asarray(history, dtype=np.float64)
    if x.shape[-1] != model.input_len:
        raise ValueError(
            f"forecast: history length {x.shape[-1]} does not match input_len {model.input_len}"
        )
    return x


def forecast(model: Forecaster, history: np.ndarray) -> np.ndarray:
    """Predict H values from T history values. Accepts (T,) or a (N, T) batch."""
    x = _check_input(model, history)
    p = model.params
    if model.kind == "linear":
        return x @ p["w"].T + p["b"]
    h = np.tanh(x @ p["w1"].T + p["b1"])
    return h @ p["w2"].T + p["b2"]


def backward(model: Forecaster, history: np.ndarray, output_grad: np.ndarray) -> dict[str, np.ndarray]:
    """Parameter gradients of sum(output * output_grad), summed over the batch."""
    x = _check_input(model, history)
    g = np.asarray(output_grad, dtype=np.float64)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
        g = g[None, :]
    if g.shape != (x.shape[0], model.output_len):
        raise ValueError("backward: output_grad shape must match the forecast shape")
    p = model.params
    if model.kind == "linear":
        return {"w": g.T @ x, "b": g.sum(axis=0)}
    z = x @ p["w1"].T + p["b1"]
    h = np.tanh(z)
    dh = g @ p["w2"]
    dz = dh * (1.0 - h * h)
    return {
        "w1": dz.T @ x,
        "b1": dz.sum(axis=0),
        "w2": g.T @ h,
        "b2": g.sum(axis=0),
    }


@dataclass(eq=False)
class OptimizerState:
    """Adam moments and hyperparameters for one model."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def step(model: Forecaster, grads: dict[str, np.ndarray], opt: OptimizerState) -> Forecaster:
    """One in-place Adam update. Non-finite gradients abort training."""
    if set(grads) != set(model.params):
        raise ValueError(f"step: gradient keys {sorted(grads)} do not match parameters")
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise ValueError(f"step: non-finite gradient for {name!r}, training aborted")
    if not opt.m:
        opt.m = {k: np.zeros_like(p) for k, p in model.params.items()}
        opt.v = {k: np.zeros_like(p) for k, p in model.params.items()}
    opt.step_count += 1
    t = opt.step_count
    bc1 = 1.0 - opt.beta1**t
    bc2 = 1.0 - opt.beta2**t
    for name, g in grads.items():
        opt.m[name] = opt.beta1 * opt.m[name] + (1.0 - opt.beta1) * g
        opt.v[name] = opt.beta2 * opt.v[name] + (1.0 - opt.beta2) * (g * g)
        m_hat = opt.m[name] / bc1
        v_hat = opt.v[name] / bc2
        model.params[name] -= opt.lr * m_hat / (np.sqrt(v_hat) + opt.eps)
    return model
