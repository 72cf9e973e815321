import numpy as np

from ...core import DEVICE_FS_HZ
from ...dsp import (
    ModelBandFilter,
    Preprocessor,
    design_butterworth_band_hz,
    design_chebyshev2_bandpass,
    design_notch,
)
from ...exceptions import ConfigurationError
from ..base import NeoEEGCommand

KINDS = ("preprocess", "model", "butterworth", "chebyshev2", "notch")


class Command(NeoEEGCommand):
    help = "Print second-order sections and the magnitude response of a filter design."

    config_flags = {"edges": "filter_edges"}

    def add_arguments(self, parser):
        parser.add_argument("kind", choices=KINDS)
        parser.add_argument("--fs", type=float, default=float(DEVICE_FS_HZ))
        parser.add_argument("--edges", choices=["fs", "nyquist"])
        parser.add_argument("--order", type=int, default=4)
        parser.add_argument("--lo", type=float, help="Low band edge (Hz).")
        parser.add_argument("--hi", type=float, help="High band edge (Hz).")
        parser.add_argument("--center", type=float, default=50.0, help="Notch center (Hz).")
        parser.add_argument("--bw", type=float, default=4.0, help="Notch -3 dB bandwidth (Hz).")
        parser.add_argument("--atten", type=float, default=40.0, help="Stopband attenuation (dB).")
        parser.add_argument(
            "--freqs",
            type=float,
            nargs="+",
            help="Frequencies (Hz) to report the magnitude at.",
        )

    def design(self, kind: str, fs: float, edges, options):
        if kind == "preprocess":
            return Preprocessor.design(fs, edges)
        if kind == "model":
            return ModelBandFilter.design(fs)
        if kind == "notch":
            return design_notch(options["center"], options["bw"], fs)
        lo = self.require(options["lo"], "--lo")
        hi = self.require(options["hi"], "--hi")
        if kind == "butterworth":
            return design_butterworth_band_hz(options["order"], lo, hi, fs)
        return design_chebyshev2_bandpass(options["order"], lo, hi, options["atten"], fs)

    def run(self, **options):
        conf = self.app_settings(options)
        fs = options["fs"]
        if not fs > 0:
            raise ConfigurationError("--fs must be positive")
        cascade = self.design(options["kind"], fs, conf.edges, options)

        self.stdout.write(f"# {options['kind']} fs={fs:g} sections={cascade.n_sections}")
        self.stdout.write(cascade.to_text())
        freqs = options["freqs"] or np.linspace(0.0, fs / 2.0, 11)[1:-1].tolist()
        self.stdout.write("# frequency_hz magnitude_db")
        for f, db in zip(freqs, cascade.magnitude_db(freqs, fs)):
            self.stdout.write(f"{f:.3f} {db:.2f}")
