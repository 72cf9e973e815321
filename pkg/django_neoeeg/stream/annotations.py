import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Sequence, Union

import numpy as np

SEIZURE = "seizure"
EYES_OPEN = "eyes-open"
EYES_CLOSED = "eyes-closed"
BLINK = "blink"
MOTION = "motion"


@dataclass(frozen=True, order=True)
class Annotation:
    t_start_s: float
    t_end_s: float
    label: str

    def __post_init__(self):
        if self.t_end_s < self.t_start_s:
            raise ValueError(f"annotation ends before it starts: {self}")
        if not self.label or any(c.isspace() for c in self.label):
            raise ValueError(f"annotation label must be a single word, got {self.label!r}")

    @property
    def duration_s(self) -> float:
        return self.t_end_s - self.t_start_s


def format_annotations(annotations: Iterable[Annotation]) -> str:
    return "".join(f"{a.t_start_s:g} {a.t_end_s:g} {a.label}\n" for a in annotations)


def parse_annotations(text: str) -> List[Annotation]:
    annotations = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ValueError(f"line {lineno}: expected 't_start_s t_end_s label', got {line!r}")
        annotations.append(Annotation(float(parts[0]), float(parts[1]), parts[2]))
    return annotations


def read_annotations(path: Union[str, Path]) -> List[Annotation]:
    return parse_annotations(Path(path).read_text())


def write_annotations(annotations: Iterable[Annotation], path: Union[str, Path]) -> None:
    Path(path).write_text(format_annotations(annotations))


def second_mask(
    annotations: Sequence[Annotation], duration_s: float, label: str = SEIZURE
) -> np.ndarray:
    """Per-second mask of `label`; boundaries are floored to whole seconds."""
    mask = np.zeros(int(math.ceil(duration_s)), dtype=bool)
    for annotation in annotations:
        if annotation.label != label:
            continue
        start = max(0, int(math.floor(annotation.t_start_s)))
        end = min(mask.size, int(math.floor(annotation.t_end_s)))
        mask[start:end] = True
    return mask


def read_second_mask(path: Union[str, Path]) -> np.ndarray:
    """Per-second 0/1 seizure mask; values separated by whitespace or commas."""
    tokens = Path(path).read_text().replace(",", " ").split()
    try:
        values = [int(token) for token in tokens]
    except ValueError as exc:
        raise ValueError(f"{path}: mask values must be 0 or 1: {exc}") from None
    if any(v not in (0, 1) for v in values):
        raise ValueError(f"{path}: mask values must be 0 or 1")
    return np.array(values, dtype=bool)
