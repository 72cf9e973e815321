from pathlib import Path

from ...analysis import state_report, write_spectra
from ...stream.annotations import read_annotations
from ...stream.session import read_session
from ..base import NeoEEGCommand


class Command(NeoEEGCommand):
    help = "Compare two simultaneously recorded devices per annotated state."

    def add_arguments(self, parser):
        parser.add_argument("device_a", help="Session file of the reference device.")
        parser.add_argument("device_b", help="Session file of the device under test.")
        parser.add_argument(
            "--annotations",
            help="Annotation file (default: annotations stored in the first session).",
        )
        parser.add_argument("--states", nargs="+", help="States to report, in order.")
        parser.add_argument("--resamples", type=int, default=1000)
        parser.add_argument("--seed", type=int, default=0)
        parser.add_argument("--max-lag", type=float, default=0.5, help="Alignment search (s).")
        parser.add_argument("--output", help="Directory for report.txt and spectrum files.")

    def run(self, **options):
        session_a = read_session(options["device_a"])
        session_b = read_session(options["device_b"])
        annotations = (
            read_annotations(options["annotations"])
            if options["annotations"]
            else session_a.annotations
        )

        report = state_report(
            session_a.to_recording(),
            session_b.to_recording(),
            annotations,
            states=options["states"],
            n_resamples=options["resamples"],
            seed=options["seed"],
            max_lag_s=options["max_lag"],
        )
        text = report.to_text()
        self.stdout.write(text, ending="")

        if options["output"]:
            directory = Path(options["output"])
            directory.mkdir(parents=True, exist_ok=True)
            (directory / "report.txt").write_text(text)
            for path in write_spectra(report, directory):
                self.stdout.write(f"# wrote {path}")
