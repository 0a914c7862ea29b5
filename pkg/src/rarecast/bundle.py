"""Model persistence: a versioned JSON container with a content checksum.

Arrays are stored as nested lists of full-precision floats (repr round-trips
a float64 exactly), so save, load, save again produces identical bytes. The
checksum covers the canonical payload encoding; any corruption or a format
version this code does not know is a hard error.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from . import backbone as bb
from .config import PipelineConfig
from .dataset import Normalizer, RarityThresholds
from .ewt import Boundaries, FilterBank
from .expert import ExpertModel
from .pipeline import TrainedPipeline
from .router import Router

FORMAT_VERSION = 1


class BundleError(ValueError):
    """A model file that cannot be trusted or understood."""


def _arr(a: np.ndarray) -> list:
    return np.asarray(a, dtype=np.float64).tolist()


def _forecaster_dict(model: bb.Forecaster) -> dict:
    return {
        "kind": model.kind,
        "input_len": model.input_len,
        "output_len": model.output_len,
        "hidden": model.hidden,
        "params": {k: _arr(v) for k, v in sorted(model.params.items())},
    }


def _forecaster_from(d: dict) -> bb.Forecaster:
    return bb.Forecaster(
        kind=d["kind"],
        input_len=int(d["input_len"]),
        output_len=int(d["output_len"]),
        hidden=int(d["hidden"]),
        params={k: np.asarray(v, dtype=np.float64) for k, v in d["params"].items()},
    )


def _bank_dict(bank: FilterBank | None) -> dict | None:
    if bank is None:
        return None
    return {
        "filters": _arr(bank.filters),
        "omegas": _arr(bank.boundaries.omegas),
        "gamma": bank.gamma,
    }


def _bank_from(d: dict | None) -> FilterBank | None:
    if d is None:
        return None
    return FilterBank(
        filters=np.asarray(d["filters"], dtype=np.float64),
        boundaries=Boundaries(np.asarray(d["omegas"], dtype=np.float64)),
        gamma=float(d["gamma"]),
    )


def _expert_dict(e: ExpertModel) -> dict:
    return {
        "level": e.level,
        "n_bands": e.n_bands,
        "mode": e.mode,
        "gamma": e.gamma,
        "bank": _bank_dict(e.bank),
        "backbones": [_forecaster_dict(m) for m in e.backbones],
    }


def _expert_from(d: dict) -> ExpertModel:
    return ExpertModel(
        level=int(d["level"]),
        n_bands=int(d["n_bands"]),
        backbones=[_forecaster_from(m) for m in d["backbones"]],
        mode=d["mode"],
        bank=_bank_from(d["bank"]),
        gamma=None if d["gamma"] is None else float(d["gamma"]),
    )


def _payload(tp: TrainedPipeline) -> dict:
    return {
        "config": tp.config.to_dict(),
        "normalizer": {"mean": tp.normalizer.mean, "std": tp.normalizer.std},
        "thresholds": list(tp.thresholds.as_tuple()),
        "experts": [_expert_dict(e) for e in tp.experts],
        "router": None
        if tp.router is None
        else {
            "k": tp.router.k,
            "n_experts": tp.router.n_experts,
            "horizon": tp.router.horizon,
            "gate": _forecaster_dict(tp.router.gate),
        },
    }


def _canonical(payload: dict) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), allow_nan=False)


def save_bundle(tp: TrainedPipeline, path: str | Path) -> None:
    payload = _payload(tp)
    body = _canonical(payload)
    checksum = hashlib.sha256(body.encode()).hexdigest()
    doc = {"format_version": FORMAT_VERSION, "checksum": checksum, "payload": payload}
    Path(path).write_text(json.dumps(doc, sort_keys=True, separators=(",", ":"), allow_nan=False))


def load_bundle(path: str | Path) -> TrainedPipeline:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"load_bundle: no such file: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise BundleError(f"load_bundle: {path} is not valid JSON: {exc}") from exc
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise BundleError(
            f"load_bundle: {path} has format version {version!r}, this build reads {FORMAT_VERSION}"
        )
    payload = doc.get("payload")
    stored = doc.get("checksum")
    actual = hashlib.sha256(_canonical(payload).encode()).hexdigest()
    if stored != actual:
        raise BundleError(f"load_bundle: checksum mismatch in {path}, file is corrupted")
    router = None
    if payload["router"] is not None:
        r = payload["router"]
        router = Router(
            gate=_forecaster_from(r["gate"]),
            n_experts=int(r["n_experts"]),
            horizon=int(r["horizon"]),
            k=int(r["k"]),
        )
    th = payload["thresholds"]
    return TrainedPipeline(
        experts=[_expert_from(e) for e in payload["experts"]],
        router=router,
        normalizer=Normalizer(**payload["normalizer"]),
        thresholds=RarityThresholds(float(th[0]), float(th[1]), float(th[2])),
        config=PipelineConfig.from_dict(payload["config"]),
    )
