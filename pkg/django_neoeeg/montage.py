import hashlib
import logging
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, List, Mapping, Optional, Tuple, Union

import numpy as np

from .core import Recording
from .exceptions import ConfigurationError, ShapeError

logger = logging.getLogger(__name__)

REFERENCE = "Cz"

# 10-20 sites projected onto the unit disc, nose towards +y.
ELECTRODE_POSITIONS = {
    "Fp1": (-0.247, 0.761),
    "Fp2": (0.247, 0.761),
    "C3": (-0.4, 0.0),
    "C4": (0.4, 0.0),
    "Cz": (0.0, 0.0),
    "T3": (-0.8, 0.0),
    "T4": (0.8, 0.0),
    "O1": (-0.247, -0.761),
    "O2": (0.247, -0.761),
}

REDUCED_MONTAGE = (
    ("Fp1", "T3"),
    ("T3", "O1"),
    ("Fp2", "T4"),
    ("T4", "O2"),
    ("Fp1", "C3"),
    ("C3", "O1"),
    ("Fp2", "C4"),
    ("C4", "O2"),
    ("T3", "C3"),
    ("C3", "Cz"),
    ("Cz", "C4"),
    ("C4", "T4"),
)


@dataclass(frozen=True)
class ElectrodeSet:
    labels: Tuple[str, ...] = tuple(ELECTRODE_POSITIONS)
    positions: Mapping[str, Tuple[float, float]] = field(
        default_factory=lambda: dict(ELECTRODE_POSITIONS)
    )
    reference: str = REFERENCE

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "positions", MappingProxyType(dict(self.positions)))

        if len(self.labels) != 9 or len(set(self.labels)) != 9:
            raise ConfigurationError("an electrode set holds exactly 9 distinct labels")
        if self.reference not in self.labels:
            raise ConfigurationError(f"reference {self.reference!r} is not an electrode")
        for label in self.labels:
            if label not in self.positions:
                raise ConfigurationError(f"no scalp position for electrode {label!r}")
            if np.hypot(*self.positions[label]) > 1.0:
                raise ConfigurationError(f"electrode {label!r} lies outside the unit disc")

    @property
    def recorded(self) -> Tuple[str, ...]:
        """The referential channels the converter samples, in device order."""
        return tuple(label for label in self.labels if label != self.reference)

    def position_array(self, labels: Optional[Iterable[str]] = None) -> np.ndarray:
        labels = self.labels if labels is None else tuple(labels)
        return np.array([self.positions[label] for label in labels], dtype=np.float64)


def reachability(adjacency: np.ndarray, hops: int = 3) -> np.ndarray:
    """Fraction of nodes reachable from each node by a path of at most `hops` edges."""
    adjacency = np.asarray(adjacency, dtype=bool)
    n = adjacency.shape[0]
    step = adjacency.astype(np.int64) + np.eye(n, dtype=np.int64)
    reach = np.eye(n, dtype=np.int64)
    for _ in range(hops):
        reach = np.minimum(reach @ step, 1)
    return reach.sum(axis=1) / n


@dataclass(frozen=True)
class MontageGraph:
    channels: Tuple[Tuple[str, str], ...] = REDUCED_MONTAGE
    electrodes: ElectrodeSet = field(default_factory=ElectrodeSet)
    name: str = "reduced-neonatal"

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(tuple(pair) for pair in self.channels))

        for anode, cathode in self.channels:
            for label in (anode, cathode):
                if label not in self.electrodes.labels:
                    raise ConfigurationError(f"unknown electrode {label!r} in montage")
            if anode == cathode:
                raise ConfigurationError(f"bipolar pair {anode}-{cathode} repeats an electrode")
        if len(set(self.channels)) != len(self.channels):
            raise ConfigurationError("montage lists a bipolar pair twice")

        adjacency = self.adjacency
        if not (reachability(adjacency, hops=len(self.channels)) == 1.0).all():
            raise ConfigurationError("montage graph is not connected")

    @property
    def labels(self) -> Tuple[str, ...]:
        return tuple(f"{anode}-{cathode}" for anode, cathode in self.channels)

    @property
    def n_channels(self) -> int:
        return len(self.channels)

    @property
    def adjacency(self) -> np.ndarray:
        return build_adjacency(self)

    def adjacency_with_self_loops(self) -> np.ndarray:
        return self.adjacency | np.eye(self.n_channels, dtype=bool)

    def adjacency_hash(self) -> str:
        digest = hashlib.sha256()
        digest.update("\n".join(self.labels).encode())
        digest.update(np.packbits(self.adjacency).tobytes())
        return digest.hexdigest()

    def electrode_usage(self) -> Mapping[str, int]:
        usage = {label: 0 for label in self.electrodes.labels}
        for anode, cathode in self.channels:
            usage[anode] += 1
            usage[cathode] += 1
        return usage

    def mean_reachability(self, hops: int = 3) -> float:
        return float(reachability(self.adjacency, hops).mean())

    def permuted(self, order: Iterable[int]) -> "MontageGraph":
        order = list(order)
        return MontageGraph(
            channels=tuple(self.channels[i] for i in order),
            electrodes=self.electrodes,
            name=self.name,
        )


def build_adjacency(m: MontageGraph) -> np.ndarray:
    """Channels are adjacent when their bipolar pairs share an electrode."""
    n = len(m.channels)
    members = [set(pair) for pair in m.channels]
    adjacency = np.zeros((n, n), dtype=bool)
    for i in range(n):
        for j in range(i + 1, n):
            if members[i] & members[j]:
                adjacency[i, j] = adjacency[j, i] = True
    return adjacency


def derive_bipolar(raw: Recording, montage: Optional[MontageGraph] = None) -> Recording:
    """Reconstruct the bipolar montage from a recording referenced to Cz."""
    montage = montage or MontageGraph()
    reference = montage.electrodes.reference
    recorded = montage.electrodes.recorded

    if len(raw.channels) not in (len(recorded), len(recorded) + 1):
        raise ShapeError(
            f"expected {len(recorded)} referential channels, got {len(raw.channels)}"
        )
    missing = [label for label in recorded if label not in raw.channels]
    if missing:
        raise ShapeError(f"recording lacks electrodes {', '.join(missing)}")
    unknown = [label for label in raw.channels if label not in recorded and label != reference]
    if unknown:
        raise ShapeError(
            f"unexpected channels {', '.join(unknown)}; only {reference} may accompany the recorded set"
        )

    rows = {label: raw.data[raw.channel_index(label)] for label in recorded}
    if reference in raw.channels:
        rows[reference] = raw.data[raw.channel_index(reference)]
    else:
        rows[reference] = np.zeros(raw.n_samples)

    data = np.vstack([rows[anode] - rows[cathode] for anode, cathode in montage.channels])
    return raw.replace(
        data=data,
        channels=montage.labels,
        meta={**raw.meta, "montage": montage.name},
    )


def load_montage(
    path: Union[str, Path], electrodes: Optional[ElectrodeSet] = None
) -> MontageGraph:
    pairs: List[Tuple[str, str]] = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        anode, sep, cathode = line.partition("-")
        if not sep or not anode.strip() or not cathode.strip():
            raise ConfigurationError(f"{path}:{lineno}: expected ANODE-CATHODE, got {line!r}")
        pairs.append((anode.strip(), cathode.strip()))

    logger.info("loaded %d bipolar pairs from %s", len(pairs), path)
    return MontageGraph(
        channels=tuple(pairs),
        electrodes=electrodes or ElectrodeSet(),
        name=Path(path).stem,
    )


def dump_montage(m: MontageGraph, path: Union[str, Path]) -> None:
    Path(path).write_text("".join(f"{label}\n" for label in m.labels))
