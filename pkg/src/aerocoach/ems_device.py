"""Simulated stimulator device and the client-side link to it.

The real hardware is a USB-attached stimulation circuit; here a small TCP
server stands in for it, speaking the same 8-byte frame protocol and
2-byte acknowledgement. An in-process loopback device is provided for
batch runs that do not want a socket.
"""

from __future__ import annotations

import socket
import threading

from .ems_control import FRAME_LEN, FrameSummary, ack_for, decode_frame


class DeviceError(Exception):
    pass


class DeviceUnavailable(DeviceError):
    pass


class AckMismatch(DeviceError):
    pass


class LoopbackDevice:
    """In-process stand-in: decodes, records, and acks each frame."""

    def __init__(self):
        self.received: list[FrameSummary] = []

    def send(self, frame: bytes) -> bytes:
        summary = decode_frame(frame)  # surfaces frame errors to the caller
        self.received.append(summary)
        return ack_for(frame)

    def close(self) -> None:
        pass


class SimulatedDevice:
    """TCP server accepting device frames and acking each one.

    Bad frames are answered with a zero-CRC ack so the link layer notices;
    the connection stays up either way.
    """

    def __init__(self, host: str = "127.0.0.1", port: int = 0):
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._sock.bind((host, port))
        self._sock.listen(4)
        self.host, self.port = self._sock.getsockname()
        self.received: list[FrameSummary] = []
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._serve, daemon=True)
        self._lock = threading.Lock()

    def start(self) -> "SimulatedDevice":
        self._thread.start()
        return self

    def _serve(self) -> None:
        self._sock.settimeout(0.2)
        while not self._stop.is_set():
            try:
                conn, _ = self._sock.accept()
            except socket.timeout:
                continue
            except OSError:
                break
            threading.Thread(target=self._handle, args=(conn,), daemon=True).start()

    def _handle(self, conn: socket.socket) -> None:
        conn.settimeout(0.2)
        buf = b""
        with conn:
            while not self._stop.is_set():
                try:
                    data = conn.recv(256)
                except socket.timeout:
                    continue
                except OSError:
                    return
                if not data:
                    return
                buf += data
                while len(buf) >= FRAME_LEN:
                    frame, buf = buf[:FRAME_LEN], buf[FRAME_LEN:]
                    try:
                        summary = decode_frame(frame)
                    except Exception:
                        ack = bytes([0x00, 0x00])
                    else:
                        with self._lock:
                            self.received.append(summary)
                        ack = ack_for(frame)
                    try:
                        conn.sendall(ack)
                    except OSError:
                        return

    def stop(self) -> None:
        self._stop.set()
        try:
            self._sock.close()
        except OSError:
            pass
        self._thread.join(timeout=1.0)


class DeviceLink:
    """Client side: one serialized writer sending frames and checking acks."""

    def __init__(self, host: str, port: int, timeout_s: float = 2.0):
        try:
            self._conn = socket.create_connection((host, port), timeout=timeout_s)
        except OSError as exc:
            raise DeviceUnavailable(f"cannot reach device at {host}:{port}: {exc}") from None
        self._lock = threading.Lock()

    def send(self, frame: bytes) -> bytes:
        with self._lock:
            try:
                self._conn.sendall(frame)
                ack = self._recv_exact(2)
            except OSError as exc:
                raise DeviceUnavailable(f"device link lost: {exc}") from None
        if ack != ack_for(frame):
            raise AckMismatch(f"expected {ack_for(frame).hex()}, got {ack.hex()}")
        return ack

    def _recv_exact(self, n: int) -> bytes:
        buf = b""
        while len(buf) < n:
            part = self._conn.recv(n - len(buf))
            if not part:
                raise OSError("connection closed")
            buf += part
        return buf

    def close(self) -> None:
        try:
            self._conn.close()
        except OSError:
            pass


def open_device(address: str | None):
    """Resolve a device address to a link: None/'sim' for loopback, 'tcp:host:port'."""
    if address in (None, "", "sim", "loopback"):
        return LoopbackDevice()
    if address.startswith("tcp:"):
        _, host, port = address.split(":")
        return DeviceLink(host, int(port))
    raise DeviceUnavailable(f"unrecognized device address: {address!r}")
