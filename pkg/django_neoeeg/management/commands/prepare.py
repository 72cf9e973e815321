import logging
from pathlib import Path

import numpy as np

from ...detector import WeightContainer
from ...pipeline import training_epochs
from ...stream.annotations import read_second_mask
from ...stream.edf import read_edf
from ..base import NeoEEGCommand

logger = logging.getLogger(__name__)

DATASET_KIND = "epoch-dataset"


class Command(NeoEEGCommand):
    help = "Cut EDF recordings into labelled 12 s model epochs."

    config_flags = {"montage": "montage_file"}

    def add_arguments(self, parser):
        parser.add_argument("edf_dir", help="Directory of .edf files.")
        parser.add_argument("output", help="Epoch dataset container to write.")
        parser.add_argument(
            "--masks",
            help="Directory of <name>.mask per-second seizure masks (default: edf_dir).",
        )
        parser.add_argument("--montage")

    def run(self, **options):
        conf = self.app_settings(options)
        montage = self.montage(conf)
        edf_dir = Path(options["edf_dir"])
        mask_dir = Path(options["masks"] or edf_dir)
        if not edf_dir.is_dir():
            raise NotADirectoryError(f"{edf_dir} is not a directory")

        epochs, labels, seconds, sources = [], [], [], []
        for path in sorted(edf_dir.glob("*.edf")):
            raw = read_edf(path)
            mask_path = mask_dir / f"{path.stem}.mask"
            if mask_path.exists():
                mask = read_second_mask(mask_path)
            else:
                logger.warning("%s has no mask file; treating it as seizure-free", path.name)
                mask = np.zeros(int(np.ceil(raw.duration_s)), dtype=bool)

            segments = training_epochs(raw, mask, montage, zscore=conf.zscore, edges=conf.edges)
            for epoch, label in segments:
                epochs.append(epoch.data)
                labels.append(float(label.is_seizure))
                seconds.append(label.seizure_seconds)
            sources.append(f"{path.name}:{len(segments)}")

        positive = int(sum(labels))
        self.stdout.write(
            f"{len(epochs)} epochs from {len(sources)} files: "
            f"{positive} seizure, {len(epochs) - positive} non-seizure"
        )
        if not epochs:
            logger.warning("no epochs; %s was not written", options["output"])
            return

        WeightContainer(
            {
                "epochs": np.stack(epochs),
                "labels": np.asarray(labels),
                "seizure_seconds": np.asarray(seconds),
            },
            kind=DATASET_KIND,
            metadata={
                "adjacency_sha256": montage.adjacency_hash(),
                "channels": list(montage.labels),
                "sources": sources,
                "zscore": conf.zscore,
            },
        ).write(options["output"])
