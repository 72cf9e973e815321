from pathlib import Path

from ...core import Recording, SeizureTracker
from ...detector import format_relevance
from ...pipeline import EpochScored, SeizureDetected, score_recording
from ...stream.edf import read_edf
from ...stream.session import read_session
from ..base import NeoEEGCommand


def read_recording(path: str) -> Recording:
    if Path(path).suffix.lower() == ".edf":
        return read_edf(path)
    return read_session(path).to_recording()


class Command(NeoEEGCommand):
    help = "Score every epoch of a session or EDF file and report seizure events."

    config_flags = {
        "weights": "weights",
        "montage": "montage_file",
        "threshold": "detection_threshold",
        "hop": "stream_hop_s",
        "edges": "filter_edges",
    }

    def add_arguments(self, parser):
        parser.add_argument("input", help="Session file, or an EDF file (.edf).")
        parser.add_argument("--weights")
        parser.add_argument("--montage")
        parser.add_argument("--oracle", action="store_true")
        parser.add_argument("--threshold", type=float)
        parser.add_argument("--hop", type=float)
        parser.add_argument("--edges", choices=["fs", "nyquist"])
        parser.add_argument("--relevance", help="Write channel and temporal relevance here.")

    def run(self, **options):
        conf = self.app_settings(options)
        montage = self.montage(conf)
        scorer = self.scorer(conf, montage, options["oracle"])
        tracker = SeizureTracker(threshold=conf.detection_threshold, hop_s=conf.stream_hop_s)

        dump = []
        events = 0
        for t_start_s, probability, relevance in score_recording(
            read_recording(options["input"]),
            scorer,
            montage=montage,
            hop_s=conf.stream_hop_s,
            edges=conf.edges,
            zscore=conf.zscore,
        ):
            top = relevance.top(3)
            self.stdout.write(EpochScored(t_start_s, probability, top, motion=False).line)
            onset = tracker.update(t_start_s, probability)
            if onset is not None:
                events += 1
                self.stdout.write(SeizureDetected(onset, top).line)
            if options["relevance"]:
                dump.append(format_relevance(t_start_s, relevance))

        if options["relevance"]:
            Path(options["relevance"]).write_text("".join(dump))
        self.stdout.write(f"SUMMARY seizures={events}")
