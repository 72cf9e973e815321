import logging
from pathlib import Path
from typing import Optional

import numpy as np

from ...artifact import ArtifactCleaner, EnsembleComponentClassifier, format_component_report
from ...artifact.classifier import ComponentClassifier
from ...detector import WeightContainer
from ...models import ScheduledIcaRefit
from ...stream.session import read_session, write_recording
from ..base import NeoEEGCommand

logger = logging.getLogger(__name__)


class Command(NeoEEGCommand):
    help = "Remove ocular, muscle and line-noise components from a session file with ICA."

    def add_arguments(self, parser):
        parser.add_argument("input", nargs="?", help="Session file to clean.")
        parser.add_argument("--output", help="Cleaned session file (default: <input>.clean).")
        parser.add_argument("--report", help="Component report file (default: stdout).")
        parser.add_argument(
            "--classifier-weights",
            help="Component-ensemble container; the rule-based classifier is used otherwise.",
        )
        parser.add_argument(
            "--pending",
            action="store_true",
            help="Clean the session files of every pending scheduled ICA refit.",
        )

    def classifier(self, options) -> Optional[ComponentClassifier]:
        if not options["classifier_weights"]:
            return None
        return EnsembleComponentClassifier.from_container(
            WeightContainer.read(options["classifier_weights"])
        )

    def clean_file(
        self, classifier: Optional[ComponentClassifier], source: str, output: Optional[str]
    ) -> str:
        session = read_session(source)
        recording = session.to_recording()
        cleaner = ArtifactCleaner(classifier=classifier, fs_hz=recording.fs_hz)
        window = cleaner.window_samples

        cleaned = np.empty_like(recording.data)
        report = []
        for start in range(0, recording.n_samples, window):
            result = cleaner.clean(recording.data[:, start : start + window])
            cleaned[:, start : start + window] = result.cleaned
            report.append(
                f"# window start={start / recording.fs_hz:.1f}s removed="
                f"{','.join(map(str, result.removed)) or '-'} stale={str(result.stale).lower()}\n"
            )
            report.append(format_component_report(result))

        output = output or f"{source}.clean"
        write_recording(
            recording.replace(data=cleaned),
            output,
            header=session.header,
            imu=session.imu,
            annotations=session.annotations,
        )
        logger.info("wrote cleaned session %s", output)
        return "".join(report)

    def run(self, **options):
        classifier = self.classifier(options)
        if options["pending"]:
            for refit in ScheduledIcaRefit.objects.pending().select_related("session"):
                source = refit.session.session_file
                if source and Path(source).exists():
                    self.stdout.write(self.clean_file(classifier, source, None), ending="")
                else:
                    logger.warning("refit %d has no session file to clean", refit.pk)
                refit.mark_completed()
            return

        source = self.require(options["input"], "input")
        report = self.clean_file(classifier, source, options["output"])
        if options["report"]:
            Path(options["report"]).write_text(report)
        else:
            self.stdout.write(report, ending="")
