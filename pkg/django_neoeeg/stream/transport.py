import logging
import socket
import threading
import time
from typing import Callable, Iterable, Iterator, Optional, Tuple

from ..core import DEVICE_FS_HZ
from ..exceptions import TransportError
from .simulator import DeviceSimulator, SynthConfig

logger = logging.getLogger(__name__)

Endpoint = Tuple[str, int]

RECV_BYTES = 4096


class DeviceServer:
    """Serves one client with a packet stream, optionally paced in real time."""

    accept_timeout_s = 30.0

    def __init__(self, endpoint: Endpoint, stop: Optional[threading.Event] = None):
        self.stop = stop or threading.Event()
        try:
            self.sock = socket.create_server(endpoint, reuse_port=False)
        except (OSError, OverflowError) as exc:
            raise TransportError(f"cannot listen on {endpoint[0]}:{endpoint[1]}: {exc}") from exc
        self.sock.settimeout(0.5)

    @property
    def address(self) -> Endpoint:
        return self.sock.getsockname()[:2]

    def close(self) -> None:
        self.sock.close()

    def _accept(self) -> socket.socket:
        deadline = time.monotonic() + self.accept_timeout_s
        while not self.stop.is_set():
            try:
                conn, peer = self.sock.accept()
            except socket.timeout:
                if time.monotonic() > deadline:
                    raise TransportError("no client connected before the accept timeout")
                continue
            logger.info("client connected from %s:%d", *peer[:2])
            return conn
        raise TransportError("server stopped before a client connected")

    def serve(
        self,
        packets: Iterable[bytes],
        frames_per_packet: int,
        realtime: bool = True,
    ) -> int:
        """Send every packet to the first client; returns the packet count."""
        conn = self._accept()
        period_s = frames_per_packet / DEVICE_FS_HZ
        started = time.monotonic()
        sent = 0
        try:
            with conn:
                for packet in packets:
                    if self.stop.is_set():
                        logger.info("stop requested after %d packets", sent)
                        break
                    if realtime:
                        delay = started + sent * period_s - time.monotonic()
                        if delay > 0:
                            time.sleep(delay)
                    conn.sendall(packet)
                    sent += 1
        except OSError as exc:
            raise TransportError(f"stream aborted after {sent} packets: {exc}") from exc
        finally:
            self.close()
        return sent


def simulate_device(
    config: SynthConfig,
    endpoint: Endpoint,
    realtime: bool = True,
    stop: Optional[threading.Event] = None,
    on_listening: Optional[Callable[[Endpoint], None]] = None,
) -> int:
    simulator = DeviceSimulator(config)
    server = DeviceServer(endpoint, stop)
    if on_listening is not None:
        on_listening(server.address)
    logger.info(
        "simulating %s for %.1f s on %s:%d", config.device_id, config.duration_s, *server.address
    )
    return server.serve(simulator.packets(), config.frames_per_packet, realtime=realtime)


class Receiver:
    """TCP client with bounded reconnect attempts."""

    def __init__(
        self,
        endpoint: Endpoint,
        retry_attempts: int = 3,
        retry_delay_s: float = 1.0,
        timeout_s: float = 5.0,
    ):
        self.endpoint = endpoint
        self.retry_attempts = retry_attempts
        self.retry_delay_s = retry_delay_s
        self.timeout_s = timeout_s
        self.reconnects = 0
        self.stop = threading.Event()

    def _connect(self) -> socket.socket:
        last_error: Optional[BaseException] = None
        for attempt in range(1, self.retry_attempts + 1):
            try:
                sock = socket.create_connection(self.endpoint, timeout=self.timeout_s)
                sock.settimeout(self.timeout_s)
                return sock
            except OSError as exc:
                last_error = exc
                logger.warning(
                    "connect to %s:%d failed (attempt %d/%d): %s",
                    *self.endpoint,
                    attempt,
                    self.retry_attempts,
                    exc,
                )
                if attempt < self.retry_attempts:
                    time.sleep(self.retry_delay_s)
        raise TransportError(
            f"could not reach {self.endpoint[0]}:{self.endpoint[1]} "
            f"after {self.retry_attempts} attempts: {last_error}"
        )

    def chunks(self) -> Iterator[bytes]:
        """Yield received bytes until the peer closes the stream cleanly."""
        sock = self._connect()
        try:
            while not self.stop.is_set():
                try:
                    data = sock.recv(RECV_BYTES)
                except OSError as exc:
                    sock.close()
                    logger.warning("connection lost: %s", exc)
                    self.reconnects += 1
                    if self.reconnects > self.retry_attempts:
                        raise TransportError(f"connection lost {self.reconnects} times") from exc
                    sock = self._connect()
                    continue
                if not data:
                    break
                yield data
        finally:
            sock.close()
