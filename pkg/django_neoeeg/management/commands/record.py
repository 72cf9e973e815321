import logging

from django.utils import timezone

from ...stream.protocol import StreamDecoder
from ...stream.session import SessionHeader, SessionWriter
from ...stream.transport import Receiver
from ..base import NeoEEGCommand

logger = logging.getLogger(__name__)


class Command(NeoEEGCommand):
    help = "Record a device stream to a session file."

    config_flags = {"host": "host", "port": "port"}

    def add_arguments(self, parser):
        parser.add_argument("output", help="Session file to create.")
        parser.add_argument("--host")
        parser.add_argument("--port", type=int)
        parser.add_argument("--device-id", default="neoeeg")

    def run(self, **options):
        conf = self.app_settings(options)
        receiver = Receiver(
            conf.endpoint,
            retry_attempts=conf.retry_attempts,
            retry_delay_s=conf.retry_delay_s,
        )
        decoder = StreamDecoder()
        header = SessionHeader(
            vref_v=conf.vref_v,
            gain=conf.gain,
            device_id=options["device_id"],
            start_time=timezone.now().isoformat(timespec="seconds"),
        )

        with SessionWriter(options["output"], header) as writer:
            try:
                for data in receiver.chunks():
                    writer.write_frames(decoder.feed(data))
            except KeyboardInterrupt:
                logger.info("interrupted; closing %s", options["output"])
            finally:
                stats = decoder.stats
                self.stdout.write(
                    f"recorded {stats.frames} frames from {stats.packets} packets: "
                    f"{len(stats.gaps)} gaps, {stats.crc_failures} CRC failures, "
                    f"{stats.resyncs} resyncs"
                )
