import logging
import signal
import threading
from pathlib import Path

import numpy as np

from ...stream.annotations import write_annotations
from ...stream.session import SessionHeader, write_recording
from ...stream.simulator import DeviceSimulator, SynthConfig
from ...stream.transport import simulate_device
from ..base import NeoEEGCommand

logger = logging.getLogger(__name__)


class Command(NeoEEGCommand):
    help = "Serve a synthetic device stream over TCP, or write it straight to a session file."

    config_flags = {
        "host": "host",
        "port": "port",
        "scenario": "scenario",
        "frames_per_packet": "frames_per_packet",
    }

    def add_arguments(self, parser):
        parser.add_argument("--scenario", help="YAML scenario mapped onto the synthesizer settings.")
        parser.add_argument("--host")
        parser.add_argument("--port", type=int)
        parser.add_argument("--seed", type=int, help="Override the scenario seed.")
        parser.add_argument("--duration", type=float, help="Override the scenario duration (s).")
        parser.add_argument("--frames-per-packet", type=int)
        parser.add_argument("--device", type=int, default=0, help="Virtual device index written by --output.")
        parser.add_argument("--annotations", help="Write the ground-truth annotation file here.")
        parser.add_argument(
            "--output",
            help="Write a session file instead of serving packets.",
        )
        parser.add_argument(
            "--no-realtime",
            action="store_true",
            help="Send packets as fast as the client reads them.",
        )

    def synth_config(self, conf, options) -> SynthConfig:
        config = SynthConfig.from_yaml(conf.scenario) if conf.scenario else SynthConfig()
        changes = {"frames_per_packet": conf.frames_per_packet}
        if options["seed"] is not None:
            changes["seed"] = options["seed"]
        if options["duration"] is not None:
            changes["duration_s"] = options["duration"]
        return config.replace(**changes)

    def run(self, **options):
        conf = self.app_settings(options)
        config = self.synth_config(conf, options)
        simulator = DeviceSimulator(config)

        if options["annotations"]:
            write_annotations(simulator.annotations(), options["annotations"])

        if options["output"]:
            device = options["device"]
            accel, gyro = simulator.imu_counts()
            recording = simulator.recording(device)
            write_recording(
                recording,
                Path(options["output"]),
                header=SessionHeader(
                    vref_v=config.vref_v,
                    gain=config.gain,
                    device_id=recording.meta["device_id"],
                ),
                imu=np.vstack([accel, gyro]),
                annotations=simulator.annotations(),
            )
            self.stdout.write(
                f"wrote {recording.n_samples} frames ({config.duration_s:.1f} s) to {options['output']}"
            )
            return

        def listening(address):
            self.stdout.write(f"listening on {address[0]}:{address[1]}")
            self.stdout.flush()

        stop = threading.Event()
        try:
            signal.signal(signal.SIGTERM, lambda *_: stop.set())
        except ValueError:
            logger.debug("not on the main thread; SIGTERM keeps its default action")

        try:
            sent = simulate_device(
                config,
                conf.endpoint,
                realtime=not options["no_realtime"],
                stop=stop,
                on_listening=listening,
            )
        except KeyboardInterrupt:
            logger.info("interrupted; shutting down")
            return
        self.stdout.write(f"served {sent} packets ({simulator.config.n_samples} frames)")
