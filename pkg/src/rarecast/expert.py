"""Rarity-level experts and their distillation chain.

An expert holds one backbone per spectral band; its forecast is the sum of
the per-band forecasts on the decomposed history. Experts are trained level
by level, normal first, each rare expert distilling from the level below it
through the bounded distillation term.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import backbone as bb
from . import ewt
from .dataset import N_LEVELS, RarityLevel, WindowSample, stack_windows
from .losses import kd_loss, rare_loss
from .rng import INIT, SHUFFLE, substream

log = logging.getLogger(__name__)

LEVEL_SCOPES = ("exact", "cumulative")
DECOMPOSITION_MODES = ("per_window", "global")


def collapse_level(level: int | np.ndarray, n_levels: int) -> int | np.ndarray:
    """Fold the 4 rarity levels onto n_levels experts by merging the top levels."""
    if not 1 <= n_levels <= N_LEVELS:
        raise ValueError(f"collapse_level: n_levels must be in [1, {N_LEVELS}], got {n_levels}")
    if isinstance(level, np.ndarray):
        return np.minimum(level, n_levels - 1)
    return min(int(level), n_levels - 1)


@dataclass(frozen=True)
class ExpertTrainConfig:
    """Knobs shared by every expert in a chain."""

    n_bands: int = 4
    beta: float = 0.5
    epochs: int = 20
    lr: float = 1e-3
    batch_size: int = 64
    backbone: str = "mlp"
    hidden: int = 32
    mode: str = "per_window"
    gamma: float | None = None
    use_rare_penalty: bool = True
    level_scope: str = "exact"
    n_levels: int = 4
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_bands < 1:
            raise ValueError("ExpertTrainConfig: n_bands must be >= 1")
        if self.beta < 0.0:
            raise ValueError("ExpertTrainConfig: beta must be >= 0")
        if self.mode not in DECOMPOSITION_MODES:
            raise ValueError(f"ExpertTrainConfig: mode must be one of {DECOMPOSITION_MODES}")
        if self.level_scope not in LEVEL_SCOPES:
            raise ValueError(f"ExpertTrainConfig: level_scope must be one of {LEVEL_SCOPES}")
        if not 1 <= self.n_levels <= N_LEVELS:
            raise ValueError(f"ExpertTrainConfig: n_levels must be in [1, {N_LEVELS}]")


@dataclass(eq=False)
class ExpertModel:
    """One trained expert: designated level, decomposition setup, band backbones."""

    level: int
    n_bands: int
    backbones: list[bb.Forecaster]
    mode: str = "per_window"
    bank: ewt.FilterBank | None = None
    gamma: float | None = None

    def __post_init__(self) -> None:
        if len(self.backbones) != self.n_bands:
            raise ValueError("ExpertModel: need one backbone per band")
        if self.mode == "global" and self.bank is None:
            raise ValueError("ExpertModel: global mode requires a filter bank")

    @property
    def history_len(self) -> int:
        return self.backbones[0].input_len

    @property
    def horizon(self) -> int:
        return self.backbones[0].output_len

    @property
    def penalty_level(self) -> RarityLevel:
        # A merged top expert keeps the penalty of its own ordinal index.
        return RarityLevel(min(self.level, N_LEVELS - 1))


def decompose_histories(
    histories: np.ndarray,
    n_bands: int,
    mode: str,
    bank: ewt.FilterBank | None,
    gamma: float | None = None,
) -> np.ndarray:
    """Band components (N, n_bands, T) for stacked histories under either mode."""
    x = np.atleast_2d(np.asarray(histories, dtype=np.float64))
    if mode == "global":
        if bank is None:
            raise ValueError("decompose_histories: global mode requires a bank")
        return ewt.decompose_with_bank(x, bank)
    return ewt.decompose_windows(x, n_bands, gamma)


def _forward(backbones: list[bb.Forecaster], components: np.ndarray) -> np.ndarray:
    """Summed per-band forecasts; components is (N, n_bands, T)."""
    out = bb.forecast(backbones[0], components[:, 0, :])
    for b in range(1, len(backbones)):
        out = out + bb.forecast(backbones[b], components[:, b, :])
    return out


def expert_predict_batch(
    expert: ExpertModel, histories: np.ndarray, components: np.ndarray | None = None
) -> np.ndarray:
    """Forecasts (N, H) for stacked histories, decomposing unless given components."""
    if components is None:
        components = decompose_histories(
            histories, expert.n_bands, expert.mode, expert.bank, expert.gamma
        )
    return _forward(expert.backbones, components)


def expert_predict(expert: ExpertModel, history: np.ndarray) -> np.ndarray:
    """Forecast (H,) for one history window."""
    x = np.asarray(history, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("expert_predict: expected a 1-d history")
    return expert_predict_batch(expert, x[None, :])[0]


def _losses_on(
    backbones: list[bb.Forecaster],
    components: np.ndarray,
    targets: np.ndarray,
    point_levels: np.ndarray,
    teacher_preds: np.ndarray | None,
    penalty_level: RarityLevel,
    beta: float,
    horizon: int,
) -> tuple[float, float, float]:
    """(rare, kd, total) on a full sample set; teacher_preds None means no distillation."""
    preds = _forward(backbones, components)
    rare = rare_loss(preds, targets, point_levels, penalty_level, horizon)
    kd_val = kd_loss(preds, teacher_preds).value if teacher_preds is not None else 0.0
    return rare.value, kd_val, rare.value + beta * kd_val


def train_expert(
    samples: list[WindowSample],
    level: int,
    teacher: ExpertModel | None,
    cfg: ExpertTrainConfig,
    bank: ewt.FilterBank | None = None,
    components: np.ndarray | None = None,
    teacher_preds: np.ndarray | None = None,
) -> tuple[ExpertModel, list[dict]]:
    """Train one expert on its level's windows.

    The teacher (the expert one level down) stays frozen; its predictions on
    the raw histories feed the distillation term when beta > 0. Returns the
    trained expert and the per-epoch loss curve; row 0 is the loss before
    any update.
    """
    if not samples:
        raise ValueError(f"train_expert: no samples for level {level}")
    hist, targ, plev, _ = stack_windows(samples)
    n, history_len = hist.shape
    horizon = targ.shape[1]
    plev = collapse_level(plev, cfg.n_levels)

    if components is None:
        components = decompose_histories(hist, cfg.n_bands, cfg.mode, bank, cfg.gamma)

    penalty_level = RarityLevel(min(level, N_LEVELS - 1)) if cfg.use_rare_penalty else RarityLevel.NORMAL
    distill = level > 0 and cfg.beta > 0.0
    if distill:
        if teacher is None:
            raise ValueError(
                f"train_expert: level {level} with beta={cfg.beta} requires a teacher"
            )
        if teacher_preds is None:
            teacher_preds = expert_predict_batch(teacher, hist)
    else:
        teacher_preds = None

    backbones = [
        bb.make_forecaster(
            cfg.backbone, history_len, horizon, cfg.hidden, substream(cfg.seed, INIT, level, b)
        )
        for b in range(cfg.n_bands)
    ]
    optimizers = [bb.OptimizerState(lr=cfg.lr) for _ in range(cfg.n_bands)]
    shuffle_rng = substream(cfg.seed, SHUFFLE, level)

    def curve_row(epoch: int) -> dict:
        r, k, tot = _losses_on(
            backbones, components, targ, plev, teacher_preds, penalty_level, cfg.beta, horizon
        )
        return {"epoch": epoch, "rare": r, "kd": k, "total": tot}

    curve = [curve_row(0)]
    for epoch in range(1, cfg.epochs + 1):
        order = shuffle_rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            comps_b = components[idx]
            preds = _forward(backbones, comps_b)
            rare = rare_loss(preds, targ[idx], plev[idx], penalty_level, horizon)
            dpred = np.asarray(rare.d_dpred)
            if distill:
                kd = kd_loss(preds, teacher_preds[idx])
                dpred = dpred + cfg.beta * np.asarray(kd.d_dpred)
            for b in range(cfg.n_bands):
                grads = bb.backward(backbones[b], comps_b[:, b, :], dpred)
                bb.step(backbones[b], grads, optimizers[b])
        curve.append(curve_row(epoch))

    expert = ExpertModel(
        level=level,
        n_bands=cfg.n_bands,
        backbones=backbones,
        mode=cfg.mode,
        bank=bank if cfg.mode == "global" else None,
        gamma=cfg.gamma,
    )
    return expert, curve


@dataclass(eq=False)
class ChainResult:
    experts: list[ExpertModel]
    curves: dict[int, list[dict]] = field(default_factory=dict)
    counts: dict[int, int] = field(default_factory=dict)


def build_expert_chain(
    windows: list[WindowSample],
    cfg: ExpertTrainConfig,
    bank: ewt.FilterBank | None = None,
    components: np.ndarray | None = None,
) -> ChainResult:
    """Train the full expert ladder, normal through the rarest level.

    Windows are assigned to experts by their (possibly merged) window level;
    every level must be represented. Each expert's teacher is the expert one
    level below, already trained and frozen.
    """
    if not windows:
        raise ValueError("build_expert_chain: no windows")
    if cfg.mode == "global" and bank is None:
        raise ValueError("build_expert_chain: global mode requires a fitted bank")
    hist, _, _, wlev = stack_windows(windows)
    wlev = collapse_level(wlev, cfg.n_levels)
    present = set(int(v) for v in np.unique(wlev))
    missing = [c for c in range(cfg.n_levels) if c not in present]
    if missing:
        names = ", ".join(RarityLevel(min(c, N_LEVELS - 1)).name for c in missing)
        raise ValueError(f"build_expert_chain: no windows for level(s) {names}")

    if components is None:
        components = decompose_histories(hist, cfg.n_bands, cfg.mode, bank, cfg.gamma)
    result = ChainResult(experts=[])
    teacher: ExpertModel | None = None
    for c in range(cfg.n_levels):
        if cfg.level_scope == "cumulative":
            sel = np.flatnonzero(wlev <= c)
        else:
            sel = np.flatnonzero(wlev == c)
        subset = [windows[int(i)] for i in sel]
        teacher_preds = None
        if teacher is not None and cfg.beta > 0.0:
            teacher_preds = _forward(teacher.backbones, components[sel])
        log.info(
            "training %s expert on %d windows (scope=%s)",
            RarityLevel(min(c, N_LEVELS - 1)).name, len(subset), cfg.level_scope,
        )
        expert, curve = train_expert(
            subset, c, teacher, cfg,
            bank=bank,
            components=components[sel],
            teacher_preds=teacher_preds,
        )
        result.experts.append(expert)
        result.curves[c] = curve
        result.counts[c] = len(subset)
        teacher = expert
    return result
