"""Extended-infomax ICA on the eight referential channels.

Data are centred and ZCA-sphered, then the unmixing is learned with the
block-wise natural-gradient infomax rule. Each source switches between the
super- and sub-Gaussian nonlinearity according to a running kurtosis
estimate. The learned unmixing is symmetrically orthogonalized, so the
components are exactly uncorrelated over the fit window.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from scipy import linalg, stats

from ..exceptions import NumericError, RankDeficiencyError, ShapeError

logger = logging.getLogger(__name__)

SUPER = "super"
SUB = "sub"

# Identifiability floor: samples per channel squared.
MIN_SAMPLES_PER_CHANNEL_SQ = 20


@dataclass(frozen=True)
class IcaConfig:
    l_rate: Optional[float] = None
    block: Optional[int] = None
    max_iter: int = 200
    w_change: float = 1e-12
    anneal_deg: float = 60.0
    anneal_step: float = 0.9
    kurt_momentum: float = 0.5
    signs_bias: float = 0.02
    seed: int = 0
    rank_tolerance: float = 1e-10

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.l_rate is not None and not self.l_rate > 0:
            raise ValueError("l_rate must be positive")


@dataclass(frozen=True)
class IcaModel:
    unmixing: np.ndarray
    mixing: np.ndarray
    whitener: np.ndarray
    means: np.ndarray
    source_kurtosis_signs: Tuple[str, ...]
    converged: bool = True
    n_iter: int = 0
    channels: Tuple[str, ...] = field(default=())

    @property
    def n_components(self) -> int:
        return self.unmixing.shape[0]

    @property
    def sensor_unmixing(self) -> np.ndarray:
        """Unmixing applied to centred sensor data."""
        return self.unmixing @ self.whitener

    @property
    def sensor_mixing(self) -> np.ndarray:
        """Column k is the scalp projection of component k."""
        return np.linalg.solve(self.whitener, self.mixing)


def _check_window(x: np.ndarray, n_channels: Optional[int] = None) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"expected a channels x samples window, got shape {x.shape}")
    if n_channels is not None and x.shape[0] != n_channels:
        raise ShapeError(f"model has {n_channels} channels, window has {x.shape[0]}")
    if not np.all(np.isfinite(x)):
        channel, index = np.argwhere(~np.isfinite(x))[0]
        raise NumericError(f"non-finite sample at channel {channel}, index {index}")
    return x


def _sphering(centred: np.ndarray, tolerance: float, channels: Tuple[str, ...]) -> np.ndarray:
    covariance = np.cov(centred)
    eigvals, eigvecs = linalg.eigh(covariance)
    if eigvals[0] <= tolerance * max(eigvals[-1], np.finfo(float).tiny):
        weakest = int(np.argmin(np.diag(covariance)))
        name = channels[weakest] if channels else f"#{weakest}"
        raise RankDeficiencyError(
            f"channel covariance is rank deficient (smallest eigenvalue {eigvals[0]:.3g}); "
            f"remove channel {name} or other redundant channels before ICA"
        )
    return eigvecs @ np.diag(1.0 / np.sqrt(eigvals)) @ eigvecs.T


def _infomax(data: np.ndarray, weights: np.ndarray, config: IcaConfig) -> Tuple[np.ndarray, bool, int]:
    """Extended infomax over samples x features data; returns (weights, converged, steps)."""
    n_samples, n_features = data.shape
    rng = np.random.default_rng(config.seed)

    l_rate = config.l_rate or 0.01 / math.log(n_features**2.0)
    block = config.block or int(math.floor(math.sqrt(n_samples / 3.0)))
    eye_block = block * np.eye(n_features)
    bias = np.zeros((1, n_features))
    signs = np.ones(n_features)
    old_kurt = np.zeros(n_features)

    old_weights = weights.copy()
    old_delta: Optional[np.ndarray] = None
    old_change = 0.0

    for step in range(1, config.max_iter + 1):
        permute = rng.permutation(n_samples)
        for t in range(0, n_samples - block + 1, block):
            u = data[permute[t : t + block]] @ weights + bias
            y = np.tanh(u)
            weights += l_rate * weights @ (eye_block - (u.T @ y) * signs - u.T @ u)
            bias -= l_rate * 2.0 * y.sum(axis=0, keepdims=True)
        if not np.all(np.isfinite(weights)) or np.abs(weights).max() > 1e8:
            raise NumericError("infomax weights diverged; lower the learning rate")

        kurt = stats.kurtosis(data @ weights, axis=0, fisher=True)
        kurt = config.kurt_momentum * old_kurt + (1.0 - config.kurt_momentum) * kurt
        old_kurt = kurt
        signs = np.sign(kurt + config.signs_bias)

        delta = (weights - old_weights).ravel()
        change = float(delta @ delta)
        old_weights = weights.copy()
        if step > 2 and change < config.w_change:
            logger.debug("infomax converged after %d steps", step)
            return weights, True, step

        if old_delta is not None and change > 0 and old_change > 0:
            cosine = float(delta @ old_delta) / math.sqrt(change * old_change)
            angle = math.degrees(math.acos(min(1.0, max(-1.0, cosine))))
            if angle > config.anneal_deg:
                l_rate *= config.anneal_step
                old_delta, old_change = delta, change
        else:
            old_delta, old_change = delta, change

    return weights, False, config.max_iter


def fit_ica(
    x: np.ndarray,
    config: Optional[IcaConfig] = None,
    channels: Tuple[str, ...] = (),
) -> IcaModel:
    config = config or IcaConfig()
    x = _check_window(x)
    n_channels, n_samples = x.shape
    floor = n_channels * n_channels * MIN_SAMPLES_PER_CHANNEL_SQ
    if n_samples < floor:
        raise ShapeError(
            f"ICA on {n_channels} channels needs at least {floor} samples, got {n_samples}"
        )

    means = x.mean(axis=1)
    centred = x - means[:, np.newaxis]
    whitener = _sphering(centred, config.rank_tolerance, tuple(channels))
    white = whitener @ centred

    initial = stats.ortho_group.rvs(n_channels, random_state=config.seed)
    weights, converged, n_iter = _infomax(white.T, initial, config)
    if not converged:
        logger.warning("infomax stopped after %d steps without meeting the tolerance", n_iter)

    # Sources are white.T @ weights, so the unmixing acts as weights.T.
    u, _, vt = linalg.svd(weights.T)
    unmixing = u @ vt
    activations = unmixing @ white
    kurt = stats.kurtosis(activations, axis=1, fisher=True)

    return IcaModel(
        unmixing=unmixing,
        mixing=unmixing.T.copy(),
        whitener=whitener,
        means=means,
        source_kurtosis_signs=tuple(SUPER if k >= 0 else SUB for k in kurt),
        converged=converged,
        n_iter=n_iter,
        channels=tuple(channels),
    )


def transform(model: IcaModel, x: np.ndarray) -> np.ndarray:
    x = _check_window(x, model.n_components)
    return model.sensor_unmixing @ (x - model.means[:, np.newaxis])


def inverse_transform(model: IcaModel, activations: np.ndarray) -> np.ndarray:
    activations = _check_window(activations, model.n_components)
    return model.sensor_mixing @ activations + model.means[:, np.newaxis]


def amari_index(unmixing: np.ndarray, mixing: np.ndarray) -> float:
    """0 when unmixing @ mixing is a scaled permutation; at most 1."""
    p = np.abs(np.asarray(unmixing) @ np.asarray(mixing))
    n = p.shape[0]
    if n < 2:
        return 0.0
    rows = (p / p.max(axis=1, keepdims=True)).sum(axis=1) - 1.0
    cols = (p / p.max(axis=0, keepdims=True)).sum(axis=0) - 1.0
    return float((rows.sum() + cols.sum()) / (2.0 * n * (n - 1)))
