import logging
from typing import Optional

from ...exceptions import TransportError
from ...models import MonitoringSession, MotionAlert, SeizureEvent
from ...pipeline import (
    MonitorEvent,
    MonitorPipeline,
    MonitorRun,
    MotionDetected,
    SeizureDetected,
    session_frames,
)
from ...stream.protocol import packetize
from ...stream.session import SessionHeader, SessionWriter, read_session
from ...stream.transport import Receiver
from ..base import NeoEEGCommand

logger = logging.getLogger(__name__)


class Command(NeoEEGCommand):
    help = "Run live seizure and motion monitoring on a device stream."

    config_flags = {
        "host": "host",
        "port": "port",
        "weights": "weights",
        "montage": "montage_file",
        "threshold": "detection_threshold",
        "hop": "stream_hop_s",
        "edges": "filter_edges",
        "queue_size": "queue_size",
    }

    def add_arguments(self, parser):
        parser.add_argument("--host")
        parser.add_argument("--port", type=int)
        parser.add_argument("--weights", help="CNN-GAT weight container.")
        parser.add_argument("--montage", help="Bipolar pair file.")
        parser.add_argument(
            "--oracle",
            action="store_true",
            help="Score with the band-power test oracle instead of trained weights.",
        )
        parser.add_argument("--threshold", type=float)
        parser.add_argument("--hop", type=float, help="Seconds between scored epochs.")
        parser.add_argument("--edges", choices=["fs", "nyquist"])
        parser.add_argument("--queue-size", type=int)
        parser.add_argument("--record", help="Also write the stream to this session file.")
        parser.add_argument("--replay", help="Read frames from a session file instead of TCP.")
        parser.add_argument(
            "--no-persist",
            action="store_true",
            help="Do not store the session and its events in the database.",
        )

    def persist(self, session: Optional[MonitoringSession], event: MonitorEvent) -> None:
        if session is None:
            return
        if isinstance(event, SeizureDetected):
            SeizureEvent.from_onset(session, event.onset, event.top_channels)
        elif isinstance(event, MotionDetected):
            MotionAlert.from_event(session, event.event)

    def run(self, **options):
        conf = self.app_settings(options)
        montage = self.montage(conf)
        pipeline = MonitorPipeline(
            self.scorer(conf, montage, options["oracle"]),
            montage=montage,
            threshold=conf.detection_threshold,
            hop_s=conf.stream_hop_s,
            motion=conf.motion_thresholds,
            edges=conf.edges,
            zscore=conf.zscore,
            vref_v=conf.vref_v,
            gain=conf.gain,
        )

        if options["replay"]:
            frames = list(session_frames(read_session(options["replay"])))
            chunks = packetize(frames, conf.frames_per_packet)
            endpoint = f"replay:{options['replay']}"
        else:
            chunks = Receiver(
                conf.endpoint,
                retry_attempts=conf.retry_attempts,
                retry_delay_s=conf.retry_delay_s,
            ).chunks()
            endpoint = "{}:{}".format(*conf.endpoint)

        writer = None
        if options["record"]:
            writer = SessionWriter(
                options["record"], SessionHeader(vref_v=conf.vref_v, gain=conf.gain)
            )
        session = None
        if not options["no_persist"]:
            session = MonitoringSession.objects.start(
                device_id=writer.header.device_id if writer else "neoeeg",
                endpoint=endpoint,
                session_file=options["record"] or "",
            )

        run = MonitorRun(chunks, pipeline, writer=writer, queue_size=conf.queue_size)
        seizures = motions = 0
        try:
            for event in run.events():
                self.stdout.write(event.line)
                seizures += isinstance(event, SeizureDetected)
                motions += isinstance(event, MotionDetected) and not event.closed
                self.persist(session, event)
        except KeyboardInterrupt:
            logger.info("interrupted; draining the pipeline")
        except TransportError as exc:
            logger.error("stream lost: %s", exc)
            raise
        finally:
            if writer is not None:
                writer.close()
            stats = run.decoder.stats
            if session is not None:
                session.close(
                    frames_received=stats.frames,
                    gap_count=len(stats.gaps),
                    crc_failures=stats.crc_failures,
                )
                if writer is not None:
                    session.schedule_ica_refit(reason="session recorded")
            self.stdout.write(
                f"SUMMARY frames={stats.frames} packets={stats.packets} gaps={len(stats.gaps)} "
                f"crc={stats.crc_failures} filled={pipeline.frames_filled} "
                f"epochs={pipeline.epochs_scored} seizures={seizures} motion={motions}"
            )
