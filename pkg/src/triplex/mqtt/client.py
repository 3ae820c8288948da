"""Threaded MQTT client: blocking qos-1 publish with retransmission, polled inbox."""

from __future__ import annotations

import socket
import threading
from collections import deque

from .packets import (
    ConnAck,
    Connect,
    DeliveryError,
    Disconnect,
    MqttError,
    NeedMoreBytes,
    PingReq,
    PingResp,
    ProtocolError,
    PubAck,
    Publish,
    SessionClosed,
    SubAck,
    Subscribe,
    decode_packet,
    encode_packet,
)


class _Waiter:
    """One in-flight request waiting for its ack packet."""

    __slots__ = ("event", "packet", "closed")

    def __init__(self):
        self.event = threading.Event()
        self.packet = None
        self.closed = False


class ClientSession:
    """One clean-session connection to a broker.

    The reader thread owns the socket's receive side; poll() drains the
    inbound queue it fills. Sends are serialized by a lock, so the session
    may be driven from several threads even though one at a time is typical.
    """

    def __init__(
        self,
        address,
        client_id: str,
        keep_alive_s: int = 0,
        ack_timeout_s: float = 2.0,
        ack_attempts: int = 3,
        connect_timeout_s: float = 10.0,
        auto_ping: bool = True,
    ):
        self.client_id = client_id
        self.keep_alive_s = keep_alive_s
        self.ack_timeout_s = ack_timeout_s
        self.ack_attempts = ack_attempts
        self._sock = socket.create_connection(address, timeout=connect_timeout_s)
        self._write_lock = threading.Lock()
        self._state_lock = threading.Lock()
        self._pending: dict[int, _Waiter] = {}
        self._next_pid = 1
        self._inbox = deque()
        self._inbox_ready = threading.Condition()
        self._closed = threading.Event()
        self._close_reason = "session closed"

        self._handshake()
        self._sock.settimeout(0.2)
        self._reader = threading.Thread(
            target=self._read_loop, name=f"mqtt-client-{client_id}", daemon=True
        )
        self._reader.start()
        self._pinger = None
        if auto_ping and keep_alive_s > 0:
            self._pinger = threading.Thread(
                target=self._ping_loop, name=f"mqtt-ping-{client_id}", daemon=True
            )
            self._pinger.start()

    def _handshake(self):
        self._sock.sendall(encode_packet(Connect(self.client_id, self.keep_alive_s)))
        buf = b""
        while True:
            out = decode_packet(buf)
            if out is not NeedMoreBytes:
                break
            chunk = self._sock.recv(4096)
            if not chunk:
                raise SessionClosed("broker closed the connection during connect")
            buf += chunk
        packet, used = out
        if not isinstance(packet, ConnAck):
            raise ProtocolError(f"expected CONNACK, got {type(packet).__name__}")
        if packet.return_code != 0:
            self._sock.close()
            raise MqttError(f"connection refused, return code {packet.return_code}")
        self._leftover = buf[used:]

    # -- inbound side -------------------------------------------------

    def _read_loop(self):
        buf = self._leftover
        try:
            while not self._closed.is_set():
                out = decode_packet(buf)
                if out is NeedMoreBytes:
                    try:
                        chunk = self._sock.recv(4096)
                    except socket.timeout:
                        continue
                    except OSError:
                        break
                    if not chunk:
                        break
                    buf += chunk
                    continue
                packet, used = out
                buf = buf[used:]
                self._dispatch(packet)
        except ProtocolError as exc:
            self._close_reason = f"protocol error: {exc}"
        finally:
            self._shutdown("connection lost")

    def _dispatch(self, packet):
        if isinstance(packet, Publish):
            if packet.qos == 1:
                self._send(PubAck(packet.packet_id))
            with self._inbox_ready:
                self._inbox.append(packet)
                self._inbox_ready.notify_all()
        elif isinstance(packet, (PubAck, SubAck)):
            with self._state_lock:
                waiter = self._pending.pop(packet.packet_id, None)
            if waiter is not None:
                waiter.packet = packet
                waiter.event.set()
        elif isinstance(packet, PingResp):
            pass
        else:
            raise ProtocolError(f"unexpected {type(packet).__name__} from broker")

    def _ping_loop(self):
        interval = max(self.keep_alive_s * 0.5, 0.1)
        while not self._closed.wait(interval):
            try:
                self._send(PingReq())
            except SessionClosed:
                return

    # -- outbound side ------------------------------------------------

    def _send(self, packet):
        wire = encode_packet(packet)
        with self._write_lock:
            if self._closed.is_set():
                raise SessionClosed(self._close_reason)
            try:
                self._sock.sendall(wire)
            except OSError:
                raise SessionClosed("connection lost")

    def _claim_pid(self):
        with self._state_lock:
            for _ in range(0xFFFF):
                pid = self._next_pid
                self._next_pid = pid % 0xFFFF + 1
                if pid not in self._pending:
                    waiter = _Waiter()
                    self._pending[pid] = waiter
                    return pid, waiter
        raise MqttError("no free packet ids")

    def publish(self, topic: str, payload: bytes, qos: int = 1):
        """Send one message; qos 1 blocks until the broker acknowledges.

        On ack timeout the publish is retransmitted with the dup flag, up
        to ack_attempts sends in total, then DeliveryError.
        """
        if self._closed.is_set():
            raise SessionClosed(self._close_reason)
        if qos == 0:
            self._send(Publish(topic=topic, payload=payload, qos=0))
            return
        pid, waiter = self._claim_pid()
        try:
            for attempt in range(self.ack_attempts):
                self._send(
                    Publish(topic=topic, payload=payload, qos=1, packet_id=pid, dup=attempt > 0)
                )
                if waiter.event.wait(self.ack_timeout_s):
                    if waiter.closed:
                        raise SessionClosed(self._close_reason)
                    return
            raise DeliveryError(
                f"no ack for packet {pid} after {self.ack_attempts} attempts"
            )
        finally:
            with self._state_lock:
                self._pending.pop(pid, None)

    def subscribe(self, topic_filter: str, qos: int = 1) -> int:
        """Register a subscription; returns the granted qos."""
        if self._closed.is_set():
            raise SessionClosed(self._close_reason)
        pid, waiter = self._claim_pid()
        try:
            self._send(Subscribe(packet_id=pid, filters=((topic_filter, qos),)))
            if not waiter.event.wait(self.ack_timeout_s):
                raise DeliveryError(f"no suback for packet {pid}")
            if waiter.closed:
                raise SessionClosed(self._close_reason)
            granted = waiter.packet.return_codes[0]
            if granted == 0x80:
                raise MqttError(f"subscription to {topic_filter!r} refused")
            return granted
        finally:
            with self._state_lock:
                self._pending.pop(pid, None)

    def poll(self, timeout_s: float = 0.0) -> list:
        """Drain inbound publishes in arrival order.

        With a timeout, blocks until at least one message arrives or the
        timeout elapses; returns whatever is queued (possibly nothing).
        """
        with self._inbox_ready:
            if not self._inbox and timeout_s > 0:
                self._inbox_ready.wait_for(
                    lambda: self._inbox or self._closed.is_set(), timeout_s
                )
            out = list(self._inbox)
            self._inbox.clear()
        return out

    # -- lifecycle ----------------------------------------------------

    @property
    def closed(self) -> bool:
        return self._closed.is_set()

    def _shutdown(self, reason: str):
        if self._closed.is_set():
            return
        self._close_reason = reason
        self._closed.set()
        with self._state_lock:
            pending = list(self._pending.values())
            self._pending.clear()
        for waiter in pending:
            waiter.closed = True
            waiter.event.set()
        with self._inbox_ready:
            self._inbox_ready.notify_all()
        try:
            self._sock.close()
        except OSError:
            pass

    def close(self):
        """Send DISCONNECT (best effort) and tear the session down."""
        if not self._closed.is_set():
            try:
                self._send(Disconnect())
            except SessionClosed:
                pass
        self._shutdown("session closed")
        if threading.current_thread() is not self._reader:
            self._reader.join(timeout=2.0)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def client_connect(address, client_id: str, keep_alive_s: int = 0, **kwargs) -> ClientSession:
    """Open a clean session to the broker at address (host, port)."""
    return ClientSession(address, client_id, keep_alive_s, **kwargs)
