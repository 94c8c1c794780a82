"""From-scratch random forest for binary classification.

CART trees split on Gini impurity decrease with thresholds at midpoints of
consecutive distinct sorted feature values; ties between equally good
splits break towards the lower feature index, then the lower threshold
(exact rational comparisons, see _grow_py).  Each tree trains on a
bootstrap sample of n rows and draws max_features candidate features per
node without replacement.  Scoring averages leaf positive fractions over
trees (soft voting), so the forest output is a probability in [0, 1].

Tree i draws from an RNG stream derived from (forest seed, i), so training
results are independent of worker count and scheduling; the compiled
kernel releases the GIL, letting thread pools parallelise over trees.

Determinism contract: identical (X order, y order, seed) give identical
models.  Bootstrap draws are defined on row indices, so permuting training
rows changes the draws and may change predictions.
"""
from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .. import _seeds
from . import _backend
from ._backend import active_backend_name, cython_available, get_backend

MODEL_FORMAT = "nupolar-forest"
MODEL_VERSION = 1

__all__ = [
    "ForestConfig",
    "Split",
    "FlatTree",
    "ForestModel",
    "ModelFormatError",
    "best_split",
    "train_tree",
    "train_forest",
    "predict_proba",
    "serialize",
    "deserialize",
    "save_model",
    "load_model",
    "active_backend_name",
    "cython_available",
    "get_backend",
]


class ModelFormatError(Exception):
    """Raised when a serialized model cannot be decoded."""


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 1000
    max_features: int | None = None     # None -> floor(sqrt(n_features))
    min_samples_split: int = 2
    max_depth: int | None = None        # None -> unbounded
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.max_features is not None and self.max_features < 1:
            raise ValueError("max_features must be >= 1")
        if self.min_samples_split < 2:
            raise ValueError("min_samples_split must be >= 2")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")

    def resolve_max_features(self, n_features: int) -> int:
        if n_features < 1:
            raise ValueError("need at least one feature")
        if self.max_features is None:
            return max(1, math.floor(math.sqrt(n_features)))
        if self.max_features > n_features:
            raise ValueError(
                f"max_features {self.max_features} exceeds feature count {n_features}"
            )
        return self.max_features

    def as_dict(self) -> dict:
        return {
            "n_trees": self.n_trees,
            "max_features": self.max_features,
            "min_samples_split": self.min_samples_split,
            "max_depth": self.max_depth,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class Split:
    feature: int
    threshold: float
    impurity_decrease: float


@dataclass
class FlatTree:
    """One decision tree as parallel arrays; feature == -1 marks a leaf."""

    feature: np.ndarray         # int32
    threshold: np.ndarray       # float64
    left: np.ndarray            # int32
    right: np.ndarray           # int32
    value: np.ndarray           # float64 leaf positive fraction
    n_node_samples: np.ndarray  # int32

    @property
    def n_nodes(self) -> int:
        return int(self.feature.shape[0])


def _coerce_xy(X, y=None):
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"X must be 2D, got {X.ndim}D")
    if y is None:
        return X, None
    y = np.ascontiguousarray(y, dtype=np.uint8)
    if y.shape != (X.shape[0],):
        raise ValueError("y length must match X rows")
    if y.size and y.max() > 1:
        raise ValueError("labels must be 0/1")
    return X, y


def best_split(X, y, candidate_features=None, sample_indices=None, backend=None):
    """Best Gini split of the given rows over the candidate features.

    Returns a Split or None when no split strictly decreases impurity
    (e.g. a pure node).  Ties break to the lower feature index, then the
    lower threshold.
    """
    X, y = _coerce_xy(X, y)
    n, d = X.shape
    if candidate_features is None:
        candidate_features = range(d)
    cand = sorted(int(f) for f in candidate_features)
    if not cand:
        raise ValueError("candidate feature set is empty")
    if cand[0] < 0 or cand[-1] >= d:
        raise ValueError(f"candidate features out of range for d={d}")
    idx = (
        np.arange(n, dtype=np.int64)
        if sample_indices is None
        else np.asarray(sample_indices, dtype=np.int64)
    )
    kern = get_backend(backend)
    found = kern.best_split_on(X, y, idx, np.asarray(cand, dtype=np.int32))
    if found is None:
        return None
    f, thr, u, v = found
    n_node = idx.size
    P = int(y[idx].sum())
    N = n_node - P
    decrease = u / (v * n_node) - (P * P + N * N) / (n_node * n_node)
    return Split(feature=f, threshold=thr, impurity_decrease=decrease)


def train_tree(X, y, seed, config: ForestConfig, backend=None) -> FlatTree:
    """Grow one tree on a bootstrap sample drawn from the stream ``seed``."""
    X, y = _coerce_xy(X, y)
    if X.shape[0] == 0:
        raise ValueError("cannot train on an empty dataset")
    mf = config.resolve_max_features(X.shape[1])
    kern = get_backend(backend)
    arrays = kern.grow_tree(
        X, y, int(seed), mf, config.min_samples_split, config.max_depth
    )
    return FlatTree(*arrays)


@dataclass
class ForestModel:
    trees: list[FlatTree]
    config: ForestConfig
    n_features: int
    dataset_fingerprint: str = ""
    backend_used: str = ""

    def predict_proba(self, X, backend=None) -> np.ndarray:
        """Mean leaf positive fraction over trees, one score per row."""
        X, _ = _coerce_xy(X)
        if X.shape[1] != self.n_features:
            raise ValueError(
                f"input has {X.shape[1]} features, model expects {self.n_features}"
            )
        kern = get_backend(backend)
        acc = np.zeros(X.shape[0], dtype=np.float64)
        for t in self.trees:
            kern.predict_into(
                t.feature, t.threshold, t.left, t.right, t.value, X, acc
            )
        return acc / len(self.trees)


def _fingerprint(X: np.ndarray, y: np.ndarray) -> str:
    h = hashlib.sha256()
    h.update(str(X.shape).encode())
    h.update(X.tobytes())
    h.update(y.tobytes())
    return h.hexdigest()[:16]


def train_forest(X, y, config: ForestConfig, threads: int = 1, backend=None) -> ForestModel:
    """Train config.n_trees trees; tree i uses the stream (config.seed, i)."""
    X, y = _coerce_xy(X, y)
    if X.shape[0] == 0:
        raise ValueError("cannot train on an empty dataset")
    config.resolve_max_features(X.shape[1])   # validate early
    seeds = [
        _seeds.child_seed(config.seed, _seeds.TREE, i) for i in range(config.n_trees)
    ]
    if threads <= 1:
        trees = [train_tree(X, y, s, config, backend=backend) for s in seeds]
    else:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            trees = list(
                ex.map(lambda s: train_tree(X, y, s, config, backend=backend), seeds)
            )
    return ForestModel(
        trees=trees,
        config=config,
        n_features=X.shape[1],
        dataset_fingerprint=_fingerprint(X, y),
        backend_used=backend or _backend.active_backend_name(),
    )


def predict_proba(model: ForestModel, x, backend=None):
    """Score one feature row (1D) or a matrix (2D) of rows."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        return float(model.predict_proba(x[None, :], backend=backend)[0])
    return model.predict_proba(x, backend=backend)


def serialize(model: ForestModel) -> bytes:
    """Versioned JSON encoding; thresholds keep full decimal precision."""
    obj = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "config": model.config.as_dict(),
        "n_features": model.n_features,
        "dataset_fingerprint": model.dataset_fingerprint,
        "trees": [
            {
                "feature": t.feature.tolist(),
                "threshold": t.threshold.tolist(),
                "left": t.left.tolist(),
                "right": t.right.tolist(),
                "value": t.value.tolist(),
                "n_node_samples": t.n_node_samples.tolist(),
            }
            for t in model.trees
        ],
    }
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def deserialize(data: bytes) -> ForestModel:
    try:
        obj = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise ModelFormatError(f"not a valid model file: {err}") from err
    if not isinstance(obj, dict) or obj.get("format") != MODEL_FORMAT:
        raise ModelFormatError("not a nupolar forest model")
    if obj.get("version") != MODEL_VERSION:
        raise ModelFormatError(
            f"model version {obj.get('version')!r} unsupported, expected {MODEL_VERSION}"
        )
    try:
        config = ForestConfig(**obj["config"])
        trees = [
            FlatTree(
                feature=np.asarray(t["feature"], dtype=np.int32),
                threshold=np.asarray(t["threshold"], dtype=np.float64),
                left=np.asarray(t["left"], dtype=np.int32),
                right=np.asarray(t["right"], dtype=np.int32),
                value=np.asarray(t["value"], dtype=np.float64),
                n_node_samples=np.asarray(t["n_node_samples"], dtype=np.int32),
            )
            for t in obj["trees"]
        ]
    except (KeyError, TypeError, ValueError) as err:
        raise ModelFormatError(f"malformed model: {err}") from err
    if len(trees) != config.n_trees:
        raise ModelFormatError(
            f"model holds {len(trees)} trees but config says {config.n_trees}"
        )
    return ForestModel(
        trees=trees,
        config=config,
        n_features=int(obj["n_features"]),
        dataset_fingerprint=str(obj.get("dataset_fingerprint", "")),
    )


def save_model(model: ForestModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize(model))


def load_model(path) -> ForestModel:
    with open(path, "rb") as fh:
        return deserialize(fh.read())
