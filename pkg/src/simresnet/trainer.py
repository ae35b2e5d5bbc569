"""Training protocol: normalization, online SGD, weight averaging, depth selection."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import _kernels
from .core import (
    ActivationKind,
    ContractError,
    Network,
    NumericError,
    SimResNetError,
    average_networks,
)
from .forward import forward_batch, lift_inputs
from .gradients import backprop_gradients

log = logging.getLogger(__name__)

FEATURES = ("feret", "area", "aspect_ratio")
GROUPS = ("V", "RN")


class DegenerateDataError(SimResNetError, ValueError):
    """A channel is constant across the corpus, so min-max scaling is undefined."""


class TrainingDiverged(NumericError):
    def __init__(self, iteration: int, message: str = "training diverged"):
        super().__init__(f"{message} at iteration {iteration}")
        self.iteration = iteration


@dataclass(frozen=True, eq=False)
class PictureSample:
    """Measurements of one micrograph: an (M, d) feature matrix and one target.

    Raw samples carry physical units (feret in um, area in um^2, aspect ratio
    dimensionless, target in MPa). Normalized samples skip the physical
    range checks.
    """

    picture_id: str
    group: str
    features: np.ndarray
    target: float
    feature_names: tuple = ("feret",)
    normalized: bool = False

    def __post_init__(self):
        feats = np.array(self.features, dtype=float)
        if feats.ndim == 1:
            feats = feats[:, None]
        feats.setflags(write=False)
        names = tuple(self.feature_names)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "target", float(self.target))
        if self.group not in GROUPS:
            raise ContractError(f"unknown group {self.group!r}")
        if feats.shape[0] < 1:
            raise ContractError(f"picture {self.picture_id}: needs at least one measurement")
        if feats.shape[1] != len(names) or not names:
            raise ContractError(
                f"picture {self.picture_id}: {feats.shape[1]} feature columns "
                f"but names {names}"
            )
        unknown = set(names) - set(FEATURES)
        if unknown:
            raise ContractError(f"unknown features {sorted(unknown)}")
        if not np.all(np.isfinite(feats)) or not np.isfinite(self.target):
            raise ContractError(f"picture {self.picture_id}: non-finite values")
        if self.normalized:
            return
        if self.target <= 0:
            raise ContractError(f"picture {self.picture_id}: target must be positive")
        for j, name in enumerate(names):
            col = feats[:, j]
            if name == "aspect_ratio" and np.any(col < 1.0):
                raise ContractError(f"picture {self.picture_id}: aspect ratio below 1")
            if name in ("feret", "area") and np.any(col <= 0.0):
                raise ContractError(f"picture {self.picture_id}: {name} must be positive")

    @property
    def n_measurements(self) -> int:
        return self.features.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def select(self, names: Sequence[str]) -> "PictureSample":
        """Restrict to the given feature columns, in the given order."""
        missing = [n for n in names if n not in self.feature_names]
        if missing:
            raise ContractError(f"picture {self.picture_id} lacks features {missing}")
        cols = [self.feature_names.index(n) for n in names]
        return replace(self, features=self.features[:, cols], feature_names=tuple(names))


@dataclass(frozen=True)
class NormalizationTransform:
    """Corpus-wide min-max scaling of each feature channel and of the target."""

    feature_names: tuple
    feature_min: tuple
    feature_max: tuple
    target_min: float
    target_max: float

    def __post_init__(self):
        for name, lo, hi in zip(self.feature_names, self.feature_min, self.feature_max):
            if not hi > lo:
                raise DegenerateDataError(f"feature {name!r} is constant ({lo})")
        if not self.target_max > self.target_min:
            raise DegenerateDataError(f"target is constant ({self.target_min})")

    def _bounds(self, names):
        idx = [self.feature_names.index(n) for n in names]
        lo = np.array(self.feature_min)[idx]
        hi = np.array(self.feature_max)[idx]
        return lo, hi

    def features(self, values, names=None):
        lo, hi = self._bounds(names or self.feature_names)
        return (np.asarray(values, dtype=float) - lo) / (hi - lo)

    def invert_features(self, values, names=None):
        lo, hi = self._bounds(names or self.feature_names)
        return np.asarray(values, dtype=float) * (hi - lo) + lo

    def target(self, value):
        return (np.asarray(value, dtype=float) - self.target_min) / (
            self.target_max - self.target_min
        )

    def invert_target(self, value):
        return np.asarray(value, dtype=float) * (
            self.target_max - self.target_min
        ) + self.target_min

    def apply(self, picture: PictureSample) -> PictureSample:
        if picture.normalized:
            raise ContractError(f"picture {picture.picture_id} is already normalized")
        missing = set(self.feature_names) - set(picture.feature_names)
        if missing:
            raise ContractError(
                f"picture {picture.picture_id} lacks features {sorted(missing)} "
                "required by the transform"
            )
        picture = picture.select(self.feature_names)
        return replace(
            picture,
            features=self.features(picture.features),
            target=float(self.target(picture.target)),
            normalized=True,
        )

    def to_dict(self) -> dict:
        return {
            "feature_names": list(self.feature_names),
            "feature_min": [float(v) for v in self.feature_min],
            "feature_max": [float(v) for v in self.feature_max],
            "target_min": float(self.target_min),
            "target_max": float(self.target_max),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "NormalizationTransform":
        return cls(
            tuple(data["feature_names"]),
            tuple(float(v) for v in data["feature_min"]),
            tuple(float(v) for v in data["feature_max"]),
            float(data["target_min"]),
            float(data["target_max"]),
        )


def fit_transform(pictures: Sequence[PictureSample]) -> NormalizationTransform:
    if not pictures:
        raise ContractError("normalization needs at least one picture")
    names = pictures[0].feature_names
    if any(p.feature_names != names for p in pictures):
        raise ContractError("pictures disagree on their feature columns")
    stacked = np.concatenate([p.features for p in pictures])
    targets = np.array([p.target for p in pictures])
    return NormalizationTransform(
        names,
        tuple(float(v) for v in stacked.min(axis=0)),
        tuple(float(v) for v in stacked.max(axis=0)),
        float(targets.min()),
        float(targets.max()),
    )


def normalize(pictures: Sequence[PictureSample]):
    """Min-max scale every feature channel and the target to [0, 1].

    Returns the normalized pictures and the transform, which can be reused
    on other corpora (e.g. a model trained on group V applied to group RN).
    """
    transform = fit_transform(pictures)
    return [transform.apply(p) for p in pictures], transform


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    max_iterations: int = 10_000
    depth: int = 4
    activation: ActivationKind = ActivationKind.SIGMOID
    validation_fraction: float = 0.0
    seed: int = 0
    averaging_count: int = 1
    horizon: float = 1.0
    # plateau rule: stop once the best epoch loss has not improved by more
    # than plateau_tol during the last plateau_window epochs; None disables it
    plateau_window: int | None = 50
    plateau_tol: float = 1e-10
    init_scale: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "activation", ActivationKind.parse(self.activation))
        if self.learning_rate < 0:
            raise ContractError("learning rate must be non-negative")
        if self.max_iterations < 1 or self.depth < 1 or self.averaging_count < 1:
            raise ContractError("iterations, depth and averaging_count must be positive")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ContractError("validation_fraction must lie in [0, 1)")

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["activation"] = self.activation.value
        return d


@dataclass
class TrainReport:
    network: Network
    loss_history: np.ndarray
    iterations: int
    stopping_reason: str
    initial: Network | None = field(default=None, repr=False)


def init_network(feature_dim: int, cfg: TrainConfig, width_multiplier: int = 1) -> Network:
    """Weights and biases uniform in [-init_scale, init_scale], drawn from ``cfg.seed``."""
    rng = np.random.default_rng(cfg.seed)
    n = feature_dim * width_multiplier
    s = cfg.init_scale
    w = rng.uniform(-s, s, size=(cfg.depth, n, n))
    b = rng.uniform(-s, s, size=(cfg.depth, n))
    return Network.from_arrays(w, b, cfg.horizon / cfg.depth, cfg.activation, feature_dim)


def make_wide(feature_dim: int, width_multiplier: int, cfg: TrainConfig) -> Network:
    """Initialized network with N = d * width_multiplier neurons per layer."""
    if width_multiplier < 1:
        raise ContractError("width multiplier must be >= 1")
    return init_network(feature_dim, cfg, width_multiplier)


def _prepared(net: Network, picture: PictureSample):
    if not picture.normalized:
        raise ContractError(f"picture {picture.picture_id} must be normalized first")
    if picture.feature_dim != net.feature_dim:
        raise ContractError(
            f"picture has {picture.feature_dim} features, network expects {net.feature_dim}"
        )
    x = lift_inputs(picture.features, net.width_multiplier)
    h = np.full(net.width, picture.target)
    return x, h


def measurement_order(n: int, seed: int) -> np.ndarray:
    # separate stream from the initialization draw
    return np.random.default_rng([seed, 1]).permutation(n)


def sgd_epoch(net: Network, picture: PictureSample, xi: float, order=None) -> Network:
    """One pass of per-measurement gradient steps (reference numpy path).

    ``order`` is the visiting order of the measurements; natural order if None.
    """
    x, h = _prepared(net, picture)
    if order is None:
        order = range(len(x))
    w, b = net.stacked()
    current = net
    for i in order:
        try:
            grads = backprop_gradients(current, x[i], h)
        except (NumericError, ValueError) as exc:
            raise TrainingDiverged(0, str(exc)) from exc
        w -= xi * grads.weights
        b -= xi * grads.biases
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise TrainingDiverged(0)
        current = net.with_arrays(w, b)
    return current


def _plateaued(best: list, window: int | None, tol: float) -> bool:
    # best[i] is the smallest loss among the first i + 1 epochs
    if window is None or len(best) <= window:
        return False
    return best[-window - 1] - best[-1] < tol


def train(picture: PictureSample, cfg: TrainConfig, net: Network | None = None) -> TrainReport:
    """Run up to ``cfg.max_iterations`` epochs of online SGD on one normalized picture.

    ``net`` overrides the seeded initialization (used for wide models and
    warm starts). The history holds the mean per-measurement loss of each
    epoch, measured before each update.
    """
    if net is None:
        net = init_network(picture.feature_dim, cfg)
    x, h = _prepared(net, picture)
    w, b = net.stacked()
    order = measurement_order(len(x), cfg.seed)
    history, best = [], []
    reason = "max_iterations"
    for it in range(1, cfg.max_iterations + 1):
        mean_loss, ok = _kernels.sgd_epoch_kernel(
            w, b, x, order, h, net.dt, float(cfg.learning_rate), net.activation.code
        )
        if not ok or not np.isfinite(mean_loss):
            raise TrainingDiverged(it)
        history.append(mean_loss)
        best.append(min(mean_loss, best[-1]) if best else mean_loss)
        if _plateaued(best, cfg.plateau_window, cfg.plateau_tol):
            reason = "plateau"
            break
    trained = net.with_arrays(w, b)
    log.debug("trained %s: %d epochs, final loss %.3e (%s)", picture.picture_id, it, history[-1], reason)
    return TrainReport(trained, np.array(history), len(history), reason, initial=net)


def train_averaged(pictures: Sequence[PictureSample], cfg: TrainConfig) -> Network:
    """Train one network per picture from the same initialization and average parameters."""
    if not pictures:
        raise ContractError("train_averaged needs at least one picture")
    init = init_network(pictures[0].feature_dim, cfg)
    nets = [train(p, cfg, init).network for p in pictures]
    return average_networks(nets)


def evaluate_outputs(net: Network, picture: PictureSample) -> np.ndarray:
    x, _ = _prepared(net, picture)
    return forward_batch(x, net)


def select_depth(
    pictures_train: Sequence[PictureSample],
    pictures_val: Sequence[PictureSample],
    candidate_depths: Sequence[int],
    cfg: TrainConfig,
) -> int:
    """Depth with the smallest mean validation error; ties go to the smaller depth."""
    from .metrics import picture_error

    if not candidate_depths:
        raise ContractError("no candidate depths")
    if not pictures_train or not pictures_val:
        raise ContractError("training and validation pictures are required")
    train_ids = {p.picture_id for p in pictures_train}
    if train_ids & {p.picture_id for p in pictures_val}:
        raise ContractError("training and validation pictures overlap")
    best_depth, best_err = None, np.inf
    for depth in sorted(set(int(d) for d in candidate_depths)):
        dcfg = replace(cfg, depth=depth)
        if len(pictures_train) == 1:
            net = train(pictures_train[0], dcfg).network
        else:
            net = train_averaged(pictures_train, dcfg)
        err = np.mean([picture_error(evaluate_outputs(net, p), p.target) for p in pictures_val])
        log.info("depth %d: validation eta_bar %.6g", depth, err)
        if err < best_err:
            best_depth, best_err = depth, err
    return best_depth


def split_validation(pictures: Sequence[PictureSample], fraction: float, seed: int):
    """Seeded disjoint split into (train, validation) pictures."""
    n_val = int(round(fraction * len(pictures)))
    perm = np.random.default_rng([seed, 2]).permutation(len(pictures))
    val = [pictures[i] for i in sorted(perm[:n_val])]
    tr = [pictures[i] for i in sorted(perm[n_val:])]
    return tr, val


def predict_limit(net: Network, picture: PictureSample, transform: NormalizationTransform) -> float:
    """One limit per picture: mean of all output components, mapped back to MPa."""
    outputs = evaluate_outputs(net, picture)
    return float(transform.invert_target(outputs.mean()))
