from .annotations import (
    Annotation,
    read_annotations,
    read_second_mask,
    second_mask,
    write_annotations,
)
from .edf import read_edf, write_edf
from .motion import MotionDetector, MotionEvent, MotionThresholds, Severity, detect_motion
from .protocol import (
    Gap,
    Packet,
    StreamDecoder,
    decode_packet,
    decode_stream,
    encode_packet,
    packetize,
)
from .session import (
    Session,
    SessionHeader,
    SessionWriter,
    read_session,
    record_session,
    write_recording,
)
from .simulator import DeviceSimulator, SynthConfig
from .transport import DeviceServer, Receiver, simulate_device
