"""Model artifact: one self-describing JSON document, written atomically.

The artifact is a pure function of (training data, config, seed): the
trained-at instant is derived from the data window, not the wall clock,
so retraining on identical inputs reproduces the file byte for byte.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from dataclasses import dataclass, field
from typing import Mapping

from .pricing import GridConfig, Guardrails
from .predictors import (
    CancellationModel,
    ConstantCancellation,
    LogisticCancellation,
    SegmentedCancellation,
)
from .tree import SegmentationTree, tree_from_dict, tree_to_dict
from .windows import WindowCatalog, WindowMnlParams

ARTIFACT_SCHEMA_VERSION = 1


class ArtifactError(ValueError):
    pass


@dataclass
class ModelArtifact:
    tree: SegmentationTree
    cancellation: SegmentedCancellation
    guardrails: Guardrails
    objective_alpha: float
    trained_at: str
    window_start: str
    window_end: str
    window_weeks: float
    subsample_fraction: float
    subsample_seed: int
    serving_grid: GridConfig = field(default_factory=GridConfig)
    window_model: WindowMnlParams | None = None
    window_catalog: WindowCatalog | None = None
    schema_version: int = ARTIFACT_SCHEMA_VERSION

    @property
    def num_options(self) -> int:
        return self.tree.bucket_map.num_options

    @property
    def version(self) -> str:
        """Content hash; stable across byte-identical round trips."""
        return hashlib.sha256(self.to_json_bytes()).hexdigest()[:12]

    def to_json_bytes(self) -> bytes:
        doc = {
            "schema_version": int(self.schema_version),
            "trained_at": self.trained_at,
            "window": {
                "start": self.window_start,
                "end": self.window_end,
                "weeks": float(self.window_weeks),
            },
            "subsample": {
                "fraction": float(self.subsample_fraction),
                "seed": int(self.subsample_seed),
            },
            "tree": tree_to_dict(self.tree),
            "cancellation": _cancellation_to_dict(self.cancellation),
            "guardrails": {
                "floor": [float(f) for f in self.guardrails.floor],
                "ceiling": [float(c) for c in self.guardrails.ceiling],
            },
            "objective_alpha": float(self.objective_alpha),
            "serving_grid": {
                "m1_points": int(self.serving_grid.m1_points),
                "m2_points": int(self.serving_grid.m2_points),
                "refine": bool(self.serving_grid.refine),
            },
            "window_model": _window_model_to_dict(self.window_model, self.window_catalog),
        }
        return (json.dumps(doc, sort_keys=True, indent=2) + "\n").encode()

    def save(self, path) -> None:
        """Write-temp-then-rename so readers never see a partial artifact."""
        directory = os.path.dirname(os.path.abspath(path))
        fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(self.to_json_bytes())
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise

    @classmethod
    def load(cls, path) -> "ModelArtifact":
        with open(path, "rb") as fh:
            return cls.from_json_bytes(fh.read())

    @classmethod
    def from_json_bytes(cls, raw: bytes) -> "ModelArtifact":
        try:
            doc = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ArtifactError(f"artifact is not valid JSON: {exc.msg}") from None
        version = doc.get("schema_version")
        if version != ARTIFACT_SCHEMA_VERSION:
            raise ArtifactError(
                f"artifact schema_version {version!r} unsupported "
                f"(expected {ARTIFACT_SCHEMA_VERSION})"
            )
        grid = doc.get("serving_grid", {})
        window_model, window_catalog = _window_model_from_dict(doc.get("window_model"))
        return cls(
            tree=tree_from_dict(doc["tree"]),
            cancellation=_cancellation_from_dict(doc["cancellation"]),
            guardrails=Guardrails(
                tuple(doc["guardrails"]["floor"]), tuple(doc["guardrails"]["ceiling"])
            ),
            objective_alpha=float(doc["objective_alpha"]),
            trained_at=doc["trained_at"],
            window_start=doc["window"]["start"],
            window_end=doc["window"]["end"],
            window_weeks=float(doc["window"]["weeks"]),
            subsample_fraction=float(doc["subsample"]["fraction"]),
            subsample_seed=int(doc["subsample"]["seed"]),
            serving_grid=GridConfig(
                m1_points=int(grid.get("m1_points", 41)),
                m2_points=int(grid.get("m2_points", 41)),
                refine=bool(grid.get("refine", True)),
            ),
            window_model=window_model,
            window_catalog=window_catalog,
        )


def _one_cancellation_to_dict(model: CancellationModel) -> dict:
    if isinstance(model, ConstantCancellation):
        return {"type": "constant", "rate": model.rate}
    return {
        "type": "logistic",
        "intercept": model.intercept,
        "feature_coefs": list(model.feature_coefs),
        "option_coefs": list(model.option_coefs),
        "feature_names": list(model.feature_names),
    }


def _one_cancellation_from_dict(d: Mapping) -> CancellationModel:
    if d["type"] == "constant":
        return ConstantCancellation(rate=float(d["rate"]))
    if d["type"] == "logistic":
        return LogisticCancellation(
            intercept=float(d["intercept"]),
            feature_coefs=tuple(d["feature_coefs"]),
            option_coefs=tuple(d["option_coefs"]),
            feature_names=tuple(d["feature_names"]),
        )
    raise ArtifactError(f"unknown cancellation model type {d.get('type')!r}")


def _cancellation_to_dict(model: SegmentedCancellation) -> dict:
    return {
        "global": _one_cancellation_to_dict(model.global_model),
        "by_segment": {
            str(seg): _one_cancellation_to_dict(m)
            for seg, m in sorted(model.by_segment.items())
        },
    }


def _cancellation_from_dict(d: Mapping) -> SegmentedCancellation:
    return SegmentedCancellation(
        by_segment={
            int(k): _one_cancellation_from_dict(v)
            for k, v in d.get("by_segment", {}).items()
        },
        global_model=_one_cancellation_from_dict(d["global"]),
    )


def _window_model_to_dict(
    model: WindowMnlParams | None, catalog: WindowCatalog | None
) -> dict | None:
    if model is None:
        return None
    return {
        "alpha": list(model.alpha),
        "beta": model.beta,
        "gamma_vec": list(model.gamma_vec),
        "delta": model.delta,
        "feature_names": list(model.feature_names),
        "catalog": [list(w) for w in catalog.windows] if catalog else None,
    }


def _window_model_from_dict(d: Mapping | None):
    if d is None:
        return None, None
    model = WindowMnlParams(
        alpha=tuple(d["alpha"]),
        beta=float(d["beta"]),
        gamma_vec=tuple(d["gamma_vec"]),
        delta=float(d["delta"]),
        feature_names=tuple(d["feature_names"]),
    )
    catalog = (
        WindowCatalog(tuple((int(s), int(n)) for s, n in d["catalog"]))
        if d.get("catalog")
        else None
    )
    return model, catalog
