"""End-to-end wiring: data preparation, chain and router training, prediction.

The order of operations is fixed: split the raw series 8:1:1, fit the
normalizer on the training split, normalize every split, fit rarity
thresholds on the normalized training values, then window each split
separately so windows never straddle a split edge.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import ewt
from .config import PipelineConfig
from .dataset import (
    Normalizer,
    RarityThresholds,
    TimeSeries,
    WindowSample,
    compute_thresholds,
    load_csv,
    make_windows,
    split_811,
    stack_windows,
    synth_generate,
)
from .expert import ExpertModel, build_expert_chain, decompose_histories, expert_predict_batch, train_expert
from .router import Router, pipeline_predict_batch, train_router


@dataclass(eq=False)
class PreparedData:
    """Normalized splits, their windows, and the fitted labeling artifacts."""

    name: str
    normalizer: Normalizer
    thresholds: RarityThresholds
    train: TimeSeries
    val: TimeSeries
    test: TimeSeries
    train_windows: list[WindowSample]
    val_windows: list[WindowSample]
    test_windows: list[WindowSample]


def load_series(cfg: PipelineConfig) -> TimeSeries:
    """Raw series from the configured source."""
    if cfg.source == "csv":
        return load_csv(cfg.data_path, cfg.data_column, cfg.delimiter)
    return synth_generate(cfg.seed, cfg.synth_n, cfg.spike_rate, cfg.spike_scale)


def prepare_data(
    cfg: PipelineConfig,
    series: TimeSeries | None = None,
    normalizer: Normalizer | None = None,
    thresholds: RarityThresholds | None = None,
) -> PreparedData:
    """Split, normalize, threshold, and window a series per the config.

    Pass normalizer/thresholds to reuse fitted artifacts (evaluating new data
    against an already trained bundle); by default both are fitted here.
    """
    series = series if series is not None else load_series(cfg)
    train_raw, val_raw, test_raw = split_811(series)
    if normalizer is None:
        normalizer = Normalizer.fit(train_raw.values, cfg.normalization)
    train = TimeSeries(normalizer.apply(train_raw.values), name=series.name)
    val = TimeSeries(normalizer.apply(val_raw.values), name=series.name)
    test = TimeSeries(normalizer.apply(test_raw.values), name=series.name)
    if thresholds is None:
        thresholds = compute_thresholds(train.values, cfg.percentiles)
    t, h, s = cfg.history_len, cfg.horizon, cfg.stride
    return PreparedData(
        name=series.name,
        normalizer=normalizer,
        thresholds=thresholds,
        train=train,
        val=val,
        test=test,
        train_windows=make_windows(train, t, h, s, thresholds),
        val_windows=make_windows(val, t, h, s, thresholds),
        test_windows=make_windows(test, t, h, s, thresholds),
    )


@dataclass(eq=False)
class TrainedPipeline:
    """Everything needed to forecast: experts, router, scaling, labeling, config."""

    experts: list[ExpertModel]
    router: Router | None
    normalizer: Normalizer
    thresholds: RarityThresholds
    config: PipelineConfig


@dataclass(eq=False)
class TrainLogs:
    expert_curves: dict[int, list[dict]] = field(default_factory=dict)
    expert_counts: dict[int, int] = field(default_factory=dict)
    router_curve: list[dict] = field(default_factory=list)


def fit_global_bank(train: TimeSeries, cfg: PipelineConfig) -> ewt.FilterBank:
    """Boundaries from the whole training series, bank sized for one window."""
    boundaries = ewt.detect_boundaries(train.values, cfg.n_bands)
    return ewt.build_filter_bank(boundaries, cfg.history_len // 2 + 1, cfg.gamma)


def train_pipeline(
    data: PreparedData, cfg: PipelineConfig, train_router_too: bool = True
) -> tuple[TrainedPipeline, TrainLogs]:
    """Train the expert chain and (by default) the router on the training windows."""
    bank = fit_global_bank(data.train, cfg) if cfg.mode == "global" else None
    hist, _, _, _ = stack_windows(data.train_windows)
    components = decompose_histories(hist, cfg.n_bands, cfg.mode, bank, cfg.gamma)

    chain = build_expert_chain(data.train_windows, cfg.expert_cfg(), bank, components)
    logs = TrainLogs(expert_curves=chain.curves, expert_counts=chain.counts)
    router = None
    if train_router_too:
        router, logs.router_curve = train_router(
            chain.experts, data.train_windows, cfg.router_cfg(), components
        )
    tp = TrainedPipeline(
        experts=chain.experts,
        router=router,
        normalizer=data.normalizer,
        thresholds=data.thresholds,
        config=cfg,
    )
    return tp, logs


def predict_windows(
    tp: TrainedPipeline, windows: list[WindowSample], k: int | None = None
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Fused forecasts on window samples: (preds (N, H), alphas, sparse weights)."""
    if tp.router is None:
        raise ValueError("predict_windows: this pipeline has no trained router")
    hist, _, _, _ = stack_windows(windows)
    return pipeline_predict_batch(tp.experts, tp.router, hist, k=k)


def train_baseline(data: PreparedData, cfg: PipelineConfig) -> ExpertModel:
    """Single-band forecaster trained with plain MSE on every training window.

    This is the reference model for directional checks: no decomposition,
    no rarity penalty, no distillation, same backbone and budget.
    """
    ecfg = replace(
        cfg.expert_cfg(),
        n_bands=1,
        beta=0.0,
        use_rare_penalty=False,
        level_scope="cumulative",
        mode="per_window",
    )
    hist, _, _, _ = stack_windows(data.train_windows)
    model, _ = train_expert(
        data.train_windows, 0, None, ecfg, components=hist[:, None, :].copy()
    )
    return model


def baseline_predict(model: ExpertModel, windows: list[WindowSample]) -> np.ndarray:
    hist, _, _, _ = stack_windows(windows)
    return expert_predict_batch(model, hist)
