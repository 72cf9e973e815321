"""Live monitoring: decode, filter, derive, epoch, score and track events.

`MonitorPipeline` is the synchronous core fed with decoded frames.
`MonitorRun` wraps it in a bounded three-stage thread pipeline
(decode, DSP and detection, recording) whose events are consumed on the
caller's thread.
"""

import logging
import queue
import threading
from dataclasses import dataclass
from typing import Iterable, Iterator, List, Optional, Protocol, Sequence, Tuple, Union

import numpy as np

from .core import (
    ACCEL_LSB_PER_G,
    ADC_CHANNELS,
    DEFAULT_GAIN,
    DEFAULT_VREF_V,
    DEVICE_FS_HZ,
    EPOCH_SECONDS,
    GYRO_LSB_PER_DPS,
    SAMPLE_PERIOD_US,
    Epoch,
    EpochLabel,
    EpochSegmenter,
    Recording,
    SampleFrame,
    SegmentMode,
    SeizureOnset,
    SeizureTracker,
    adc_to_microvolts,
    microvolts_to_adc,
)
from .detector.inference import Relevance, preprocess_for_model
from .dsp import EdgeConvention, Preprocessor, resample
from .exceptions import ShapeError
from .montage import MontageGraph, derive_bipolar
from .stream.motion import MotionDetector, MotionEvent, MotionThresholds
from .stream.protocol import StreamDecoder
from .stream.session import Session, SessionWriter

logger = logging.getLogger(__name__)


class EpochScorer(Protocol):
    def score(self, epoch: Epoch) -> Tuple[float, Relevance]:
        ...


@dataclass(frozen=True)
class EpochScored:
    t_s: float
    probability: float
    top_channels: Tuple[str, ...]
    motion: bool

    @property
    def line(self) -> str:
        flag = "motion" if self.motion else "-"
        return f"EPOCH {self.t_s:.1f} {self.probability:.4f} {','.join(self.top_channels)} {flag}"


@dataclass(frozen=True)
class SeizureDetected:
    onset: SeizureOnset
    top_channels: Tuple[str, ...]

    @property
    def line(self) -> str:
        return (
            f"SEIZURE onset={self.onset.t_onset_s:.1f} detected={self.onset.t_detected_s:.1f} "
            f"prob={self.onset.peak_probability:.3f} channels={','.join(self.top_channels)}"
        )


@dataclass(frozen=True)
class MotionDetected:
    event: MotionEvent
    closed: bool = False

    @property
    def line(self) -> str:
        e = self.event
        state = "closed" if self.closed else "alert"
        return (
            f"MOTION {state} start={e.t_start_us / 1e6:.2f} end={e.t_end_us / 1e6:.2f} "
            f"accel={e.peak_accel_g:.2f}g gyro={e.peak_gyro_dps:.0f}dps {e.severity.value}"
        )


MonitorEvent = Union[EpochScored, SeizureDetected, MotionDetected]


class MonitorPipeline:
    """Per-frame processing state for one device stream."""

    def __init__(
        self,
        scorer: EpochScorer,
        montage: Optional[MontageGraph] = None,
        threshold: float = 0.5,
        hop_s: float = 1.0,
        motion: Optional[MotionThresholds] = None,
        edges: Union[EdgeConvention, str] = EdgeConvention.FS,
        zscore: bool = True,
        vref_v: float = DEFAULT_VREF_V,
        gain: float = DEFAULT_GAIN,
    ):
        self.scorer = scorer
        self.montage = montage or MontageGraph()
        self.fs_hz = DEVICE_FS_HZ
        self.hop_samples = int(round(hop_s * self.fs_hz))
        self.window_samples = EPOCH_SECONDS * self.fs_hz
        self.zscore = zscore
        self.vref_v = vref_v
        self.gain = gain

        self.preprocessor = Preprocessor(self.fs_hz, len(self.montage.electrodes.recorded), edges)
        self.tracker = SeizureTracker(threshold=threshold, hop_s=hop_s)
        self.motion = MotionDetector(self.fs_hz, motion)
        self._rows = self._bipolar_rows()
        self._window = np.zeros((self.montage.n_channels, 0))
        self._since_hop = 0
        self._next_seq: Optional[int] = None
        self._last_raw: Optional[SampleFrame] = None
        self._motion_spans: List[Tuple[int, Optional[int]]] = []
        self.epochs_scored = 0
        self.frames_filled = 0

    def _bipolar_rows(self) -> np.ndarray:
        """Matrix taking referential channels (Cz at zero) to the bipolar montage."""
        recorded = self.montage.electrodes.recorded
        matrix = np.zeros((self.montage.n_channels, len(recorded)))
        for i, (anode, cathode) in enumerate(self.montage.channels):
            if anode in recorded:
                matrix[i, recorded.index(anode)] += 1.0
            if cathode in recorded:
                matrix[i, recorded.index(cathode)] -= 1.0
        return matrix

    def _fill_gaps(self, frames: Sequence[SampleFrame]) -> List[SampleFrame]:
        """Hold the last sample across missing sequence numbers."""
        filled: List[SampleFrame] = []
        for frame in frames:
            if self._next_seq is not None and frame.seq > self._next_seq:
                missing = frame.seq - self._next_seq
                self.frames_filled += missing
                for k in range(missing):
                    seq = self._next_seq + k
                    filled.append(
                        SampleFrame(
                            seq=seq,
                            t_us=self._last_raw.t_us + (k + 1) * SAMPLE_PERIOD_US,
                            adc=self._last_raw.adc,
                            accel=self._last_raw.accel,
                            gyro=self._last_raw.gyro,
                        )
                    )
            filled.append(frame)
            self._next_seq = frame.seq + 1
            self._last_raw = frame
        return filled

    def _motion_flag(self, t_start_us: int, t_end_us: int) -> bool:
        return any(
            start <= t_end_us and (end is None or end >= t_start_us)
            for start, end in self._motion_spans
        )

    def _push_motion(self, frames: Sequence[SampleFrame]) -> List[MonitorEvent]:
        events: List[MonitorEvent] = []
        accel = np.array([f.accel for f in frames], dtype=np.float64) / ACCEL_LSB_PER_G
        gyro = np.array([f.gyro for f in frames], dtype=np.float64) / GYRO_LSB_PER_DPS
        closed_before = len(self.motion.closed)
        for i, frame in enumerate(frames):
            confirmed = self.motion.push(frame.t_us, accel[i], gyro[i])
            if confirmed is not None:
                self._motion_spans.append((confirmed.t_start_us, None))
                events.append(MotionDetected(confirmed))
            if len(self.motion.closed) > closed_before:
                events.append(self._close_motion(self.motion.closed[-1]))
                closed_before = len(self.motion.closed)
        return events

    def _close_motion(self, event: MotionEvent) -> MotionDetected:
        self._motion_spans = [
            (start, event.t_end_us if start == event.t_start_us else end)
            for start, end in self._motion_spans
        ]
        return MotionDetected(event, closed=True)

    def _score(self, t_end_us: int) -> List[MonitorEvent]:
        t_start_us = t_end_us - self.window_samples * SAMPLE_PERIOD_US
        epoch = preprocess_for_model(
            self._window,
            zscore=self.zscore,
            t_start_us=max(0, t_start_us),
            channels=self.montage.labels,
        )
        probability, relevance = self.scorer.score(epoch)
        self.epochs_scored += 1
        top = relevance.top(3)
        t_s = t_end_us / 1e6
        events: List[MonitorEvent] = [
            EpochScored(t_s, probability, top, self._motion_flag(t_start_us, t_end_us))
        ]
        onset = self.tracker.update(t_s, probability)
        if onset is not None:
            events.append(SeizureDetected(onset, top))
        # Drop motion spans that no longer overlap any future epoch.
        self._motion_spans = [
            (start, end) for start, end in self._motion_spans if end is None or end >= t_start_us
        ]
        return events

    def feed(self, frames: Sequence[SampleFrame]) -> List[MonitorEvent]:
        frames = self._fill_gaps(frames)
        if not frames:
            return []
        events = self._push_motion(frames)

        counts = np.array([f.adc for f in frames], dtype=np.int32).T
        uv = adc_to_microvolts(counts, vref_v=self.vref_v, gain=self.gain)
        bipolar = self._rows @ self.preprocessor.process(uv)
        t_us = np.array([f.t_us for f in frames], dtype=np.int64)

        offset = 0
        while offset < bipolar.shape[1]:
            take = min(bipolar.shape[1] - offset, self.hop_samples - self._since_hop)
            self._window = np.concatenate(
                [self._window, bipolar[:, offset : offset + take]], axis=1
            )[:, -self.window_samples :]
            offset += take
            self._since_hop += take
            if self._since_hop == self.hop_samples:
                self._since_hop = 0
                if self._window.shape[1] == self.window_samples:
                    events.extend(self._score(int(t_us[offset - 1]) + SAMPLE_PERIOD_US))
        return events

    def finish(self) -> List[MonitorEvent]:
        closed = self.motion.flush()
        return [self._close_motion(closed)] if closed is not None else []


_DONE = object()


class MonitorRun:
    """Decode -> DSP/detect -> record, each stage on its own thread.

    Stages are joined by bounded queues and shut down in stage order once
    the byte source is exhausted. The first stage error is re-raised from
    `events` after every thread has stopped.
    """

    poll_s = 0.1

    def __init__(
        self,
        chunks: Iterable[bytes],
        pipeline: MonitorPipeline,
        writer: Optional[SessionWriter] = None,
        queue_size: int = 64,
    ):
        self.chunks = chunks
        self.pipeline = pipeline
        self.writer = writer
        self.decoder = StreamDecoder()
        self.stop = threading.Event()
        self._closed = threading.Event()
        self._errors: List[BaseException] = []
        self._dsp: "queue.Queue" = queue.Queue(maxsize=queue_size)
        self._record: "queue.Queue" = queue.Queue(maxsize=queue_size)
        self._out: "queue.Queue" = queue.Queue(maxsize=queue_size)

    def _put(self, q: "queue.Queue", item) -> None:
        while not self.stop.is_set():
            try:
                q.put(item, timeout=self.poll_s)
                return
            except queue.Full:
                continue

    def _get(self, q: "queue.Queue"):
        while True:
            try:
                return q.get(timeout=self.poll_s)
            except queue.Empty:
                if self.stop.is_set():
                    return _DONE

    def _emit(self, item) -> None:
        while not self._closed.is_set():
            try:
                self._out.put(item, timeout=self.poll_s)
                return
            except queue.Full:
                continue

    def _decode(self) -> None:
        try:
            for data in self.chunks:
                if self.stop.is_set():
                    break
                frames = self.decoder.feed(data)
                if frames:
                    self._put(self._dsp, frames)
                    if self.writer is not None:
                        self._put(self._record, frames)
        except BaseException as exc:
            self._errors.append(exc)
        finally:
            self._put(self._dsp, _DONE)
            if self.writer is not None:
                self._put(self._record, _DONE)

    def _detect(self) -> None:
        try:
            while True:
                frames = self._get(self._dsp)
                if frames is _DONE:
                    break
                for event in self.pipeline.feed(frames):
                    self._emit(event)
            for event in self.pipeline.finish():
                self._emit(event)
        except BaseException as exc:
            self._errors.append(exc)
            self.stop.set()
        finally:
            self._emit(_DONE)

    def _store(self) -> None:
        try:
            while True:
                frames = self._get(self._record)
                if frames is _DONE:
                    break
                self.writer.write_frames(frames)
        except BaseException as exc:
            self._errors.append(exc)
            self.stop.set()

    def events(self) -> Iterator[MonitorEvent]:
        threads = [
            threading.Thread(target=self._decode, name="neoeeg-decode", daemon=True),
            threading.Thread(target=self._detect, name="neoeeg-detect", daemon=True),
        ]
        if self.writer is not None:
            threads.append(threading.Thread(target=self._store, name="neoeeg-record", daemon=True))
        for thread in threads:
            thread.start()

        completed = False
        try:
            while True:
                item = self._out.get()
                if item is _DONE:
                    completed = True
                    break
                yield item
        finally:
            if not completed:
                self.stop.set()
            self._closed.set()
            for thread in threads:
                thread.join()
        if self._errors:
            raise self._errors[0]


def session_frames(session: Session) -> Iterator[SampleFrame]:
    """Re-quantize a recorded session into device frames for replay."""
    header = session.header
    if len(header.channels) != ADC_CHANNELS or header.fs_hz != DEVICE_FS_HZ:
        raise ShapeError(
            f"replay needs {ADC_CHANNELS} channels at {DEVICE_FS_HZ} Hz, "
            f"got {len(header.channels)} at {header.fs_hz} Hz"
        )
    counts = microvolts_to_adc(session.data, vref_v=header.vref_v, gain=header.gain).T.tolist()
    imu = session.imu.T.tolist()
    for i, adc in enumerate(counts):
        yield SampleFrame(
            seq=i, t_us=i * SAMPLE_PERIOD_US, adc=adc, accel=imu[i][:3], gyro=imu[i][3:6]
        )


def _at_device_rate(raw: Recording) -> Recording:
    if raw.fs_hz == DEVICE_FS_HZ:
        return raw
    logger.info("resampling %s from %.1f Hz", raw.meta.get("source", "recording"), raw.fs_hz)
    return raw.replace(data=resample(raw.data, raw.fs_hz, DEVICE_FS_HZ), fs_hz=DEVICE_FS_HZ)


def score_recording(
    raw: Recording,
    scorer: EpochScorer,
    montage: Optional[MontageGraph] = None,
    hop_s: float = 1.0,
    edges: Union[EdgeConvention, str] = EdgeConvention.FS,
    zscore: bool = True,
) -> Iterator[Tuple[float, float, Relevance]]:
    """Offline scoring of a referential recording; yields (t_start_s, p, relevance)."""
    montage = montage or MontageGraph()
    bipolar = derive_bipolar(_at_device_rate(raw), montage)
    x = Preprocessor(DEVICE_FS_HZ, montage.n_channels, edges).process(bipolar.data)

    window = EPOCH_SECONDS * DEVICE_FS_HZ
    hop = int(round(hop_s * DEVICE_FS_HZ))
    if hop <= 0:
        raise ValueError("hop_s must be positive")
    for start in range(0, x.shape[1] - window + 1, hop):
        epoch = preprocess_for_model(
            x[:, start : start + window],
            zscore=zscore,
            t_start_us=start * SAMPLE_PERIOD_US,
            channels=montage.labels,
        )
        probability, relevance = scorer.score(epoch)
        yield epoch.t_start_s, probability, relevance


def training_epochs(
    raw: Recording,
    seizure_mask: np.ndarray,
    montage: Optional[MontageGraph] = None,
    zscore: bool = True,
    edges: Union[EdgeConvention, str] = EdgeConvention.FS,
) -> List[Tuple[Epoch, EpochLabel]]:
    """Label-dependent epochs of a referential recording, preprocessed as live epochs are."""
    montage = montage or MontageGraph()
    bipolar = derive_bipolar(_at_device_rate(raw), montage)
    x = Preprocessor(DEVICE_FS_HZ, montage.n_channels, edges).process(bipolar.data)

    mask = EpochSegmenter.sample_mask(seizure_mask, x.shape[1], DEVICE_FS_HZ)
    window = EPOCH_SECONDS * DEVICE_FS_HZ
    epochs = []
    for start in EpochSegmenter.window_starts(mask, DEVICE_FS_HZ, SegmentMode.TRAIN):
        epoch = preprocess_for_model(
            x[:, start : start + window],
            zscore=zscore,
            t_start_us=start * SAMPLE_PERIOD_US,
            channels=montage.labels,
        )
        label = EpochLabel(seizure_seconds=mask[start : start + window].sum() / DEVICE_FS_HZ)
        epochs.append((epoch, label))
    return epochs
