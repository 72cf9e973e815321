from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from ..core import DEVICE_FS_HZ
from ..dsp import Spectrum, welch_psd
from ..montage import ElectrodeSet
from .ica import IcaModel

TOPOMAP_SIZE = 32
LOW_BAND_HZ = (0.5, 4.0)
LINE_BAND_HZ = (48.0, 52.0)
FRONTAL_SITES = ("Fp1", "Fp2")


@dataclass(frozen=True)
class ComponentFeatures:
    index: int
    waveform: np.ndarray
    topomap: np.ndarray
    psd: Spectrum
    kurtosis: float
    low_band_ratio: float
    line_band_ratio: float
    frontal_ratio: float
    fs_hz: float = DEVICE_FS_HZ


def topomap_grid(size: int = TOPOMAP_SIZE) -> np.ndarray:
    """Pixel centres of a size x size grid spanning [-1, 1]^2, shape (size, size, 2)."""
    axis = (np.arange(size) + 0.5) / size * 2.0 - 1.0
    xx, yy = np.meshgrid(axis, axis[::-1])
    return np.stack([xx, yy], axis=-1)


def interpolate_topomap(
    values: Sequence[float],
    positions: np.ndarray,
    size: int = TOPOMAP_SIZE,
    power: float = 2.0,
) -> np.ndarray:
    """Inverse-distance-weighted scalp map; pixels outside the unit disc are zero."""
    values = np.asarray(values, dtype=np.float64)
    grid = topomap_grid(size)
    distance = np.linalg.norm(grid[:, :, np.newaxis, :] - positions[np.newaxis, np.newaxis], axis=-1)
    weights = 1.0 / np.maximum(distance, 1e-9) ** power
    image = (weights * values).sum(axis=-1) / weights.sum(axis=-1)
    image[np.hypot(grid[..., 0], grid[..., 1]) > 1.0] = 0.0
    return image


def frontal_ratio(column: np.ndarray, labels: Sequence[str]) -> float:
    energy = np.asarray(column, dtype=np.float64) ** 2
    total = energy.sum()
    if total <= 0:
        return 0.0
    frontal = sum(energy[i] for i, label in enumerate(labels) if label in FRONTAL_SITES)
    return float(frontal / total)


def extract_features(
    model: IcaModel,
    activations: np.ndarray,
    component_index: int,
    electrodes: Optional[ElectrodeSet] = None,
    fs_hz: float = DEVICE_FS_HZ,
) -> ComponentFeatures:
    electrodes = electrodes or ElectrodeSet()
    if not 0 <= component_index < model.n_components:
        raise IndexError(f"component {component_index} outside 0..{model.n_components - 1}")

    labels = model.channels or electrodes.recorded
    column = model.sensor_mixing[:, component_index]
    waveform = np.asarray(activations[component_index], dtype=np.float64)

    psd = welch_psd(waveform, fs_hz)
    total = float(psd.total_power())
    low = float(psd.band_power(*LOW_BAND_HZ))
    line = float(psd.band_power(*LINE_BAND_HZ))
    kurtosis = float(stats.kurtosis(waveform, fisher=True)) if waveform.std() > 0 else 0.0

    return ComponentFeatures(
        index=component_index,
        waveform=waveform,
        topomap=interpolate_topomap(column, electrodes.position_array(labels)),
        psd=psd,
        kurtosis=kurtosis,
        low_band_ratio=low / total if total > 0 else 0.0,
        line_band_ratio=line / total if total > 0 else 0.0,
        frontal_ratio=frontal_ratio(column, labels),
        fs_hz=fs_hz,
    )
