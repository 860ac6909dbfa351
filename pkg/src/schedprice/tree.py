"""Market segmentation tree: a binary tree over quote features with a
reference-price MNL fit in every leaf.

Split quality is the drop in summed leaf negative log-likelihood, so the
segmentation is supervised by choice behavior rather than by feature
geometry.  Candidate-split fits run at a loose tolerance for speed; final
leaves are refit at full tolerance with the same start point as
``fit_mle``, so a depth-0 tree reproduces a plain single-segment fit.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Union

import numpy as np

from .dataset import TrainingSet
from .features import CATEGORICAL, NUMERIC, FeatureSchema, encode_row
from .mnl import (
    BucketMap,
    FitConfig,
    MnlParams,
    UnidentifiableFitError,
    _fit_packed,
    build_feature_tensor,
    check_identifiable,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TreeConfig:
    """Hyperparameters of the greedy tree construction."""

    max_depth: int = 4
    min_leaf_samples: int = 200
    min_split_gain: float = 2.0          # nats of NLL improvement required
    max_numeric_candidates: int = 64
    candidate_tol: float = 1e-4
    candidate_max_iter: int = 100
    fit: FitConfig = field(default_factory=FitConfig)


@dataclass
class LeafNode:
    segment_id: int
    params: MnlParams
    n_rows: int
    train_nll: float


@dataclass
class SplitNode:
    feature: str
    kind: str
    threshold: float | None            # numeric: x <= threshold goes left
    subset: frozenset[str] | None      # categorical: x in subset goes left
    default_left: bool                 # unknown categorical symbols go here
    left: "TreeNode"
    right: "TreeNode"


TreeNode = Union[LeafNode, SplitNode]


@dataclass
class SegmentationTree:
    root: TreeNode
    schema: FeatureSchema
    bucket_map: BucketMap
    config: TreeConfig
    metadata: dict = field(default_factory=dict)

    def leaves(self) -> Iterator[LeafNode]:
        def walk(node: TreeNode) -> Iterator[LeafNode]:
            if isinstance(node, LeafNode):
                yield node
            else:
                yield from walk(node.left)
                yield from walk(node.right)

        return walk(self.root)

    @property
    def num_segments(self) -> int:
        return sum(1 for _ in self.leaves())

    def depth(self) -> int:
        def walk(node: TreeNode) -> int:
            if isinstance(node, LeafNode):
                return 0
            return 1 + max(walk(node.left), walk(node.right))

        return walk(self.root)


def route(tree: SegmentationTree, x: Mapping[str, object]) -> tuple[int, MnlParams]:
    """Deterministic leaf assignment for one feature mapping.

    Missing numeric values go left; unknown or missing categorical symbols
    go to the branch that held more training rows.  Never raises on value
    content, only on schema violations.
    """
    encoded = encode_row(tree.schema, x)
    node = tree.root
    while isinstance(node, SplitNode):
        value = encoded[node.feature]
        if node.kind == NUMERIC:
            go_left = value is None or value <= node.threshold
        else:
            if value is None or value < 0:
                go_left = node.default_left
            else:
                symbol = tree.schema.spec(node.feature).vocabulary[int(value)]
                go_left = symbol in node.subset
        node = node.left if go_left else node.right
    return node.segment_id, node.params


def _numeric_thresholds(values: np.ndarray, cap: int) -> np.ndarray:
    values = values[~np.isnan(values)]
    distinct = np.unique(values)
    if distinct.size < 2:
        return np.empty(0)
    mids = (distinct[:-1] + distinct[1:]) / 2.0
    if mids.size <= cap:
        return mids
    qs = np.quantile(values, np.linspace(0.0, 1.0, cap + 2)[1:-1])
    return np.unique(qs)


def fit_tree(
    data: TrainingSet,
    config: TreeConfig = TreeConfig(),
    bucket_map: BucketMap | None = None,
) -> SegmentationTree:
    """Greedy top-down construction; training NLL never increases.

    A split is accepted only when both children satisfy
    ``min_leaf_samples`` and the children's loose-fit NLLs beat the
    parent's by at least ``min_split_gain``.  A child whose MNL is
    unidentifiable simply disqualifies that candidate.
    """
    if bucket_map is None:
        from .mnl import single_bucket_map

        bucket_map = single_bucket_map(data.num_options)
    if data.num_rows < config.min_leaf_samples:
        raise ValueError(
            f"{data.num_rows} rows is below min_leaf_samples={config.min_leaf_samples}"
        )
    batch = data.choices
    check_identifiable(batch, bucket_map)
    feats = build_feature_tensor(batch, bucket_map)
    offered, chosen = batch.offered, batch.chosen
    n_buckets = bucket_map.num_buckets
    bounds: list[tuple[float | None, float | None]] = [(None, None)] * 3
    bounds += [(config.fit.beta_floor, None)] * n_buckets
    bounds += [(0.0, None)] * n_buckets
    x0 = np.zeros(3 + 2 * n_buckets)
    x0[3 : 3 + n_buckets] = config.fit.beta_floor

    def loose_fit(idx: np.ndarray, warm: np.ndarray) -> tuple[np.ndarray, float]:
        check_identifiable(batch.subset(idx), bucket_map)
        theta, nll, _ = _fit_packed(
            feats[idx],
            offered[idx],
            chosen[idx],
            bounds,
            warm,
            config.candidate_tol,
            config.candidate_max_iter,
        )
        return theta, nll

    next_segment = iter(range(1_000_000))

    def make_leaf(idx: np.ndarray) -> LeafNode:
        # Full-tolerance refit from the standard start so a leaf equals
        # fit_mle on its rows.
        theta, nll, converged = _fit_packed(
            feats[idx],
            offered[idx],
            chosen[idx],
            bounds,
            x0,
            config.fit.tol,
            config.fit.max_iter,
        )
        if not converged:
            logger.warning("leaf fit did not reach tolerance (%d rows)", idx.size)
        return LeafNode(
            segment_id=next(next_segment),
            params=MnlParams.from_vector(theta, bucket_map),
            n_rows=int(idx.size),
            train_nll=float(nll),
        )

    def candidate_partitions(idx: np.ndarray):
        """Yield (feature, kind, threshold, subset, left_mask) deterministically."""
        for spec in data.schema.features:
            if spec.kind == NUMERIC:
                col = data.features.numeric[spec.name][idx]
                for t in _numeric_thresholds(col, config.max_numeric_candidates):
                    yield spec.name, NUMERIC, float(t), None, (col <= t) | np.isnan(col)
            else:
                col = data.features.codes[spec.name][idx]
                present = np.unique(col[col >= 0])
                for k in present:
                    symbol = spec.vocabulary[int(k)]
                    yield spec.name, CATEGORICAL, None, frozenset((symbol,)), col == k

    def build(idx: np.ndarray, depth: int, node_fit: tuple[np.ndarray, float]) -> TreeNode:
        theta, nll_parent = node_fit
        if depth >= config.max_depth:
            return make_leaf(idx)
        best = None
        for feature, kind, threshold, subset, left_mask in candidate_partitions(idx):
            n_left = int(left_mask.sum())
            n_right = idx.size - n_left
            if min(n_left, n_right) < config.min_leaf_samples:
                continue
            left_idx = idx[left_mask]
            right_idx = idx[~left_mask]
            try:
                left_fit = loose_fit(left_idx, theta)
                right_fit = loose_fit(right_idx, theta)
            except UnidentifiableFitError:
                continue
            gain = nll_parent - (left_fit[1] + right_fit[1])
            if gain >= config.min_split_gain and (best is None or gain > best[0]):
                best = (gain, feature, kind, threshold, subset, left_idx, right_idx, left_fit, right_fit)
        if best is None:
            return make_leaf(idx)
        _, feature, kind, threshold, subset, left_idx, right_idx, left_fit, right_fit = best
        left = build(left_idx, depth + 1, left_fit)
        right = build(right_idx, depth + 1, right_fit)
        return SplitNode(
            feature=feature,
            kind=kind,
            threshold=threshold,
            subset=subset,
            default_left=left_idx.size >= right_idx.size,
            left=left,
            right=right,
        )

    all_idx = np.arange(data.num_rows)
    root_fit = loose_fit(all_idx, x0)
    root = build(all_idx, 0, root_fit)
    return SegmentationTree(
        root=root, schema=data.schema, bucket_map=bucket_map, config=config
    )


def tree_to_dict(tree: SegmentationTree) -> dict:
    def node_to_dict(node: TreeNode) -> dict:
        if isinstance(node, LeafNode):
            return {
                "leaf": {
                    "segment_id": int(node.segment_id),
                    "params": params_to_dict(node.params),
                    "n_rows": int(node.n_rows),
                    "train_nll": float(node.train_nll),
                }
            }
        return {
            "split": {
                "feature": node.feature,
                "kind": node.kind,
                "threshold": None if node.threshold is None else float(node.threshold),
                "subset": sorted(node.subset) if node.subset is not None else None,
                "default_left": bool(node.default_left),
                "left": node_to_dict(node.left),
                "right": node_to_dict(node.right),
            }
        }

    return {
        "root": node_to_dict(tree.root),
        "schema": tree.schema.to_dict(),
        "bucket_map": list(tree.bucket_map.bucket_of),
        "config": {
            "max_depth": int(tree.config.max_depth),
            "min_leaf_samples": int(tree.config.min_leaf_samples),
            "min_split_gain": float(tree.config.min_split_gain),
            "max_numeric_candidates": int(tree.config.max_numeric_candidates),
            "candidate_tol": float(tree.config.candidate_tol),
            "candidate_max_iter": int(tree.config.candidate_max_iter),
        },
        "metadata": tree.metadata,
    }


def tree_from_dict(d: Mapping) -> SegmentationTree:
    schema = FeatureSchema.from_dict(d["schema"])
    bucket_map = BucketMap(tuple(d["bucket_map"]))

    def node_from_dict(nd: Mapping) -> TreeNode:
        if "leaf" in nd:
            leaf = nd["leaf"]
            return LeafNode(
                segment_id=int(leaf["segment_id"]),
                params=params_from_dict(leaf["params"], bucket_map),
                n_rows=int(leaf["n_rows"]),
                train_nll=float(leaf["train_nll"]),
            )
        sp = nd["split"]
        return SplitNode(
            feature=sp["feature"],
            kind=sp["kind"],
            threshold=sp["threshold"],
            subset=frozenset(sp["subset"]) if sp["subset"] is not None else None,
            default_left=bool(sp["default_left"]),
            left=node_from_dict(sp["left"]),
            right=node_from_dict(sp["right"]),
        )

    cfg = d["config"]
    return SegmentationTree(
        root=node_from_dict(d["root"]),
        schema=schema,
        bucket_map=bucket_map,
        config=TreeConfig(
            max_depth=int(cfg["max_depth"]),
            min_leaf_samples=int(cfg["min_leaf_samples"]),
            min_split_gain=float(cfg["min_split_gain"]),
            max_numeric_candidates=int(cfg["max_numeric_candidates"]),
            candidate_tol=float(cfg["candidate_tol"]),
            candidate_max_iter=int(cfg["candidate_max_iter"]),
        ),
        metadata=dict(d.get("metadata", {})),
    )


def params_to_dict(params: MnlParams) -> dict:
    return {
        "alpha": list(params.alpha),
        "beta": list(params.beta),
        "gamma": list(params.gamma),
    }


def params_from_dict(d: Mapping, bucket_map: BucketMap) -> MnlParams:
    return MnlParams(
        alpha=tuple(d["alpha"]),
        beta=tuple(d["beta"]),
        gamma=tuple(d["gamma"]),
        bucket_map=bucket_map,
    )
