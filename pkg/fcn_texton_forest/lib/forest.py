#!/usr/bin/env python3
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import kaitaistruct
import numpy as np

from fcn_texton_forest.kaitai.random_forest import RandomForest as RandomForestParser
from fcn_texton_forest.lib.errors import (
    BadMagic,
    EmptyTrainingSet,
    FeatureCountMismatch,
    ForestNotTrained,
    TrainingError,
    TruncatedFile,
)
from fcn_texton_forest.lib.features import FeatureMatrix
from fcn_texton_forest.lib.logging_trait import LoggingTrait
from fcn_texton_forest.lib.utils import (
    PathLike,
    assemble_random_forest,
    atomic_write_bytes,
)
from fcn_texton_forest.lib.volume import N_CLASSES
from fcn_texton_forest.lib.workers import WorkerPool

Matrix = Union[FeatureMatrix, np.ndarray]

LEAF = -1


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 50
    max_depth: int = 15
    # None resolves to floor(sqrt(n_features))
    k_attributes: Optional[int] = None
    min_leaf: int = 1
    seed: int = 0
    max_per_class: int = 100_000

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError(f"n_trees {self.n_trees} must be >= 1")
        if self.max_depth < 0 or self.min_leaf < 1:
            raise ValueError(f"invalid max_depth {self.max_depth} / min_leaf {self.min_leaf}")
        if self.k_attributes is not None and self.k_attributes < 1:
            raise ValueError(f"k_attributes {self.k_attributes} must be >= 1")
        if self.max_per_class < 1:
            raise ValueError(f"max_per_class {self.max_per_class} must be >= 1")

    def resolve_k(self, n_features: int) -> int:
        k = self.k_attributes or max(1, math.isqrt(n_features))
        if not 1 <= k <= n_features:
            raise ValueError(f"k_attributes {k} not in 1..{n_features}")
        return k


def gini_impurity(counts: Sequence[int]) -> float:
    counts = np.asarray(counts, dtype=np.float64)
    total = counts.sum()
    if counts.min(initial=0) < 0 or not total > 0:
        raise ValueError(f"gini of invalid counts {counts.tolist()}")
    return float(1.0 - np.sum((counts / total) ** 2))


class DecisionTree:
    """
    CART tree as flat arrays in pre-order; feature == LEAF marks a leaf,
    rows with x[feature] <= threshold go left
    """

    def __init__(
        self,
        feature: np.ndarray,
        threshold: np.ndarray,
        left: np.ndarray,
        right: np.ndarray,
        counts: np.ndarray,
        sampled_features: Optional[List[np.ndarray]] = None,
    ):
        self.feature = np.asarray(feature, dtype=np.int32)
        self.threshold = np.asarray(threshold, dtype=np.float32)
        self.left = np.asarray(left, dtype=np.int32)
        self.right = np.asarray(right, dtype=np.int32)
        self.counts = np.asarray(counts, dtype=np.int64)
        self.leaf_label = np.argmax(self.counts, axis=1).astype(np.uint8)
        # attribute subset drawn at every split node, kept for instrumentation only
        self.sampled_features: List[np.ndarray] = sampled_features or []

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def depth(self) -> int:
        depths = np.zeros(self.n_nodes, dtype=np.int32)
        for node in range(self.n_nodes):
            if self.feature[node] != LEAF:
                depths[self.left[node]] = depths[node] + 1
                depths[self.right[node]] = depths[node] + 1
        return int(depths.max())

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by every row, all rows routed level by level"""
        nodes = np.zeros(len(X), dtype=np.int32)
        active = np.flatnonzero(self.feature[nodes] != LEAF)
        while len(active):
            current = nodes[active]
            go_left = X[active, self.feature[current]] <= self.threshold[current]
            nodes[active] = np.where(go_left, self.left[current], self.right[current])
            active = active[self.feature[nodes[active]] != LEAF]
        return nodes

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.leaf_label[self.apply(X)]


class _TreeBuilder:
    def __init__(self, X, y, cfg: ForestConfig, k: int, rng: np.random.Generator):
        self.X, self.y, self.cfg, self.k, self.rng = X, y, cfg, k, rng
        self.feature, self.threshold, self.left, self.right = [], [], [], []
        self.counts, self.sampled = [], []

    def build(self, rows: np.ndarray) -> DecisionTree:
        self._grow(rows, 0)
        return DecisionTree(
            self.feature,
            self.threshold,
            self.left,
            self.right,
            np.array(self.counts).reshape(-1, N_CLASSES),
            self.sampled,
        )

    def _grow(self, rows: np.ndarray, depth: int) -> int:
        node = len(self.feature)
        counts = np.bincount(self.y[rows], minlength=N_CLASSES)
        self.feature.append(LEAF)
        self.threshold.append(0.0)
        self.left.append(LEAF)
        self.right.append(LEAF)
        self.counts.append(counts)
        if (
            depth >= self.cfg.max_depth
            or np.count_nonzero(counts) < 2
            or len(rows) < 2 * self.cfg.min_leaf
        ):
            return node
        candidates = self.rng.choice(self.X.shape[1], size=self.k, replace=False)
        split = self._best_split(rows, counts, candidates)
        if split is None:
            return node
        feature, threshold = split
        self.sampled.append(np.sort(candidates))
        goes_left = self.X[rows, feature] <= threshold
        self.feature[node] = feature
        self.threshold[node] = threshold
        self.left[node] = self._grow(rows[goes_left], depth + 1)
        self.right[node] = self._grow(rows[~goes_left], depth + 1)
        return node

    def _best_split(
        self, rows: np.ndarray, counts: np.ndarray, candidates: np.ndarray
    ) -> Optional[Tuple[int, np.float32]]:
        n = len(rows)
        min_leaf = self.cfg.min_leaf
        parent = 1.0 - np.sum((counts / n) ** 2)
        labels = self.y[rows]
        best_gain, best = 1e-12, None
        # ascending feature order so equal gains resolve to the lowest index
        for feature in np.sort(candidates):
            values = self.X[rows, feature]
            order = np.argsort(values, kind="stable")
            sorted_values = values[order]
            onehot = np.zeros((n, N_CLASSES), dtype=np.int64)
            onehot[np.arange(n), labels[order]] = 1
            left_counts = np.cumsum(onehot, axis=0)[:-1]
            n_left = np.arange(1, n, dtype=np.float64)
            valid = (sorted_values[:-1] < sorted_values[1:]) & (
                (n_left >= min_leaf) & (n - n_left >= min_leaf)
            )
            if not valid.any():
                continue
            right_counts = counts[np.newaxis, :] - left_counts
            n_right = n - n_left
            gini_left = 1.0 - np.sum((left_counts / n_left[:, None]) ** 2, axis=1)
            gini_right = 1.0 - np.sum((right_counts / n_right[:, None]) ** 2, axis=1)
            gain = parent - (n_left * gini_left + n_right * gini_right) / n
            gain[~valid] = -np.inf
            position = int(np.argmax(gain))
            if gain[position] > best_gain:
                best_gain = gain[position]
                low, high = sorted_values[position], sorted_values[position + 1]
                threshold = np.float32((np.float64(low) + np.float64(high)) / 2)
                if threshold >= high:
                    threshold = np.float32(low)
                best = (int(feature), threshold)
        return best


def _as_array(X: Matrix) -> np.ndarray:
    values = X.values if isinstance(X, FeatureMatrix) else X
    values = np.asarray(values, dtype=np.float32)
    if values.ndim != 2:
        raise FeatureCountMismatch(f"feature matrix must be 2D, got {values.shape}")
    return values


def _check_labels(y: np.ndarray, n_rows: int) -> np.ndarray:
    y = np.asarray(y)
    if y.shape != (n_rows,):
        raise TrainingError(f"{len(y)} labels for {n_rows} rows")
    if len(y) and (y.min() < 0 or y.max() >= N_CLASSES):
        raise ValueError(f"labels must lie in 0..{N_CLASSES - 1}")
    return y.astype(np.int64)


def cap_per_class(y: np.ndarray, cap: int, rng: np.random.Generator) -> np.ndarray:
    """Row indices keeping at most cap rows of every class, chosen by rng, sorted"""
    keep = []
    for label in range(N_CLASSES):
        rows = np.flatnonzero(y == label)
        if len(rows) > cap:
            rows = rng.choice(rows, size=cap, replace=False)
        keep.append(rows)
    return np.sort(np.concatenate(keep))


class Forest(LoggingTrait):
    def __init__(
        self,
        trees: Sequence[DecisionTree],
        config: ForestConfig,
        n_features: int,
        oob_accuracy: Optional[float] = None,
    ):
        self.trees: List[DecisionTree] = list(trees)
        self.config: ForestConfig = config
        self.n_features: int = n_features
        self.n_classes: int = N_CLASSES
        self.oob_accuracy: Optional[float] = oob_accuracy

    def votes(self, X: Matrix) -> np.ndarray:
        if not self.trees:
            raise ForestNotTrained("forest holds no trees")
        values = _as_array(X)
        if values.shape[1] != self.n_features:
            raise FeatureCountMismatch(
                f"matrix has {values.shape[1]} columns, forest expects {self.n_features}"
            )
        votes = np.zeros((len(values), N_CLASSES), dtype=np.int64)
        rows = np.arange(len(values))
        for tree in self.trees:
            votes[rows, tree.predict(values)] += 1
        return votes

    def to_bytes(self) -> bytes:
        return assemble_random_forest(
            len(self.trees),
            self.config.max_depth,
            self.config.resolve_k(self.n_features),
            self.config.min_leaf,
            self.config.seed,
            self.n_features,
            self.n_classes,
            self.trees,
        )

    def save(self, path: PathLike) -> None:
        atomic_write_bytes(path, self.to_bytes())

    @classmethod
    def from_bytes(cls, bytedata: bytes) -> "Forest":
        if bytedata[0:4] != b"RFOR":
            raise BadMagic(f"not a forest file (magic {bytedata[0:4]!r})")
        try:
            parsed = RandomForestParser.from_bytes(bytedata)
        except (EOFError, ValueError, kaitaistruct.KaitaiStructError) as e:
            raise TruncatedFile(f"forest file: {e}") from e
        if parsed.n_classes != N_CLASSES:
            raise TruncatedFile(f"forest has {parsed.n_classes} classes")
        config = ForestConfig(
            n_trees=max(1, parsed.n_trees),
            max_depth=parsed.max_depth,
            k_attributes=parsed.k_attributes,
            min_leaf=parsed.min_leaf,
            seed=parsed.seed,
        )
        return cls(
            [_tree_from_parsed(root) for root in parsed.trees], config, parsed.n_features
        )

    @classmethod
    def load(cls, path: PathLike) -> "Forest":
        return cls.from_bytes(Path(path).read_bytes())

    def __repr__(self) -> str:
        return f"Forest({len(self.trees)} trees, {self.n_features} features)"


def _tree_from_parsed(root: RandomForestParser.TreeNode) -> DecisionTree:
    feature, threshold, left, right, counts = [], [], [], [], []

    def visit(node) -> int:
        index = len(feature)
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        if node.kind == RandomForestParser.NodeKinds.leaf:
            counts.append(list(node.body.class_counts))
            return index
        counts.append([0] * N_CLASSES)
        feature[index] = node.body.feature
        threshold[index] = node.body.threshold
        left[index] = visit(node.body.left)
        right[index] = visit(node.body.right)
        return index

    visit(root)
    tree = DecisionTree(feature, threshold, left, right, counts)
    return tree


def train_forest(
    X: Matrix, y: np.ndarray, cfg: ForestConfig, pool: Optional[WorkerPool] = None
) -> Forest:
    """
    Bagged Gini CART trees; each tree draws n rows with replacement and samples
    k_attributes features without replacement at every node
    """
    values = _as_array(X)
    labels = _check_labels(y, len(values))
    if not len(values):
        raise EmptyTrainingSet("no training rows")
    n_features = values.shape[1]
    k = cfg.resolve_k(n_features)

    streams = np.random.SeedSequence(cfg.seed).spawn(cfg.n_trees + 1)
    kept = cap_per_class(labels, cfg.max_per_class, np.random.default_rng(streams[0]))
    values, labels = values[kept], labels[kept]
    n = len(values)

    def grow(index: int) -> Tuple[DecisionTree, np.ndarray]:
        rng = np.random.default_rng(streams[index + 1])
        bootstrap = rng.integers(0, n, size=n)
        return _TreeBuilder(values, labels, cfg, k, rng).build(bootstrap), bootstrap

    grown = (pool or WorkerPool(1)).map(grow, range(cfg.n_trees))

    oob_votes = np.zeros((n, N_CLASSES), dtype=np.int64)
    for tree, bootstrap in grown:
        out_of_bag = np.flatnonzero(np.bincount(bootstrap, minlength=n) == 0)
        oob_votes[out_of_bag, tree.predict(values[out_of_bag])] += 1
    voted = oob_votes.sum(axis=1) > 0
    oob_accuracy = (
        float(np.mean(np.argmax(oob_votes[voted], axis=1) == labels[voted]))
        if voted.any()
        else None
    )
    return Forest([tree for tree, _ in grown], cfg, n_features, oob_accuracy)


def predict_matrix(forest: Forest, X: Matrix) -> np.ndarray:
    """Plurality vote per row, ties to the lowest label"""
    if forest is None:
        raise ForestNotTrained("no forest given")
    return np.argmax(forest.votes(X), axis=1).astype(np.uint8)


def predict_one(forest: Forest, x: Sequence[float]) -> Tuple[int, np.ndarray]:
    if forest is None:
        raise ForestNotTrained("no forest given")
    votes = forest.votes(np.asarray(x, dtype=np.float32).reshape(1, -1))[0]
    return int(np.argmax(votes)), votes / votes.sum()


@dataclass(frozen=True)
class CrossValidation:
    fold_accuracies: Tuple[float, ...]

    @property
    def mean_accuracy(self) -> float:
        return float(np.mean(self.fold_accuracies))


def stratified_folds(y: np.ndarray, folds: int, seed: int) -> np.ndarray:
    """Fold id per row: every class shuffled by seed, then dealt round-robin"""
    rng = np.random.default_rng(seed)
    order = np.concatenate(
        [rng.permutation(np.flatnonzero(y == label)) for label in range(N_CLASSES)]
    )
    fold_of = np.empty(len(y), dtype=np.int64)
    fold_of[order] = np.arange(len(order)) % folds
    return fold_of


def cross_validate(
    X: Matrix,
    y: np.ndarray,
    cfg: ForestConfig,
    folds: int = 4,
    seed: int = 0,
    pool: Optional[WorkerPool] = None,
) -> CrossValidation:
    values = _as_array(X)
    labels = _check_labels(y, len(values))
    if folds < 2:
        raise ValueError(f"need at least 2 folds, got {folds}")
    if folds > len(values):
        raise TrainingError(f"{folds} folds for {len(values)} samples")
    fold_of = stratified_folds(labels, folds, seed)
    accuracies = []
    for fold in range(folds):
        held_out = fold_of == fold
        fold_cfg = replace(
            cfg, seed=int(np.random.SeedSequence([seed, fold]).generate_state(1)[0])
        )
        forest = train_forest(values[~held_out], labels[~held_out], fold_cfg, pool)
        predicted = predict_matrix(forest, values[held_out])
        accuracies.append(float(np.mean(predicted == labels[held_out])))
    return CrossValidation(tuple(accuracies))
