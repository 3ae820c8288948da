"""Embedded threaded MQTT broker for the qos 0/1, clean-session subset.

One handler thread per connection; routing happens synchronously in the
publisher's thread under per-session write locks, which preserves per
connection delivery order. A sweeper thread expires silent sessions; time
comes from an injectable clock so expiry is testable without sleeping.
"""

from __future__ import annotations

import random
import socket
import threading
import time
from dataclasses import dataclass, field

from .packets import (
    ConnAck,
    Connect,
    Disconnect,
    NeedMoreBytes,
    PingReq,
    PingResp,
    ProtocolError,
    PubAck,
    Publish,
    StartupError,
    SubAck,
    Subscribe,
    decode_packet,
    encode_packet,
)
from .topics import topic_matches


@dataclass
class BrokerConfig:
    host: str = "127.0.0.1"
    port: int = 0  # 0 picks an ephemeral port
    max_sessions: int = 64
    keep_alive_grace: float = 1.5
    # fault injection: probability of not sending a PubAck back to a
    # publisher; the publisher's retransmission path is exercised by tests
    ack_drop_rate: float = 0.0
    ack_drop_seed: int = 0
    clock: callable = time.monotonic
    sweep_interval_s: float = 0.05

    def __post_init__(self):
        if self.max_sessions < 1:
            raise ValueError("max_sessions must be at least 1")
        if not 0.0 <= self.ack_drop_rate < 1.0:
            raise ValueError("ack_drop_rate must be in [0, 1)")


class _Session:
    __slots__ = (
        "conn",
        "client_id",
        "keep_alive_s",
        "subscriptions",
        "write_lock",
        "last_activity",
        "next_pid",
        "closed",
    )

    def __init__(self, conn, client_id, keep_alive_s, now):
        self.conn = conn
        self.client_id = client_id
        self.keep_alive_s = keep_alive_s
        self.subscriptions = []  # (filter, granted qos)
        self.write_lock = threading.Lock()
        self.last_activity = now
        self.next_pid = 1
        self.closed = False


class Broker:
    def __init__(self, cfg: BrokerConfig):
        self.cfg = cfg
        self._rng = random.Random(cfg.ack_drop_seed)
        self._rng_lock = threading.Lock()
        self._registry_lock = threading.RLock()
        self._sessions: dict[str, _Session] = {}
        self._threads: list[threading.Thread] = []
        self._stopping = threading.Event()
        self._stats_lock = threading.Lock()
        self.stats = {
            "sessions_opened": 0,
            "sessions_expired": 0,
            "publishes_received": 0,
            "dup_publishes_received": 0,
            "acks_dropped": 0,
            "messages_delivered": 0,
        }
        try:
            self._listener = socket.create_server((cfg.host, cfg.port))
        except OSError as exc:
            raise StartupError(f"cannot bind {cfg.host}:{cfg.port}: {exc}")
        self._listener.settimeout(0.2)
        self.address = self._listener.getsockname()[:2]
        self._accept_thread = threading.Thread(
            target=self._accept_loop, name="mqtt-broker-accept", daemon=True
        )
        self._accept_thread.start()
        self._sweeper = threading.Thread(
            target=self._sweep_loop, name="mqtt-broker-sweeper", daemon=True
        )
        self._sweeper.start()

    def _bump(self, key, n=1):
        with self._stats_lock:
            self.stats[key] += n

    # -- connection lifecycle ------------------------------------------

    def _accept_loop(self):
        while not self._stopping.is_set():
            try:
                conn, _addr = self._listener.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            t = threading.Thread(target=self._serve, args=(conn,), daemon=True)
            t.start()
            self._threads.append(t)

    def _serve(self, conn):
        conn.settimeout(0.2)
        session = None
        try:
            session, buf = self._handshake(conn)
            if session is None:
                return
            self._run_session(session, buf)
        except (ProtocolError, OSError):
            pass
        finally:
            if session is not None:
                self._unregister(session)
            try:
                conn.close()
            except OSError:
                pass

    def _recv_packet(self, conn, buf, deadline_s=10.0):
        """Read one complete packet; returns (packet, rest) or (None, buf) on EOF."""
        deadline = time.monotonic() + deadline_s
        while True:
            out = decode_packet(buf)
            if out is not NeedMoreBytes:
                packet, used = out
                return packet, buf[used:]
            if self._stopping.is_set() or time.monotonic() > deadline:
                return None, buf
            try:
                chunk = conn.recv(4096)
            except socket.timeout:
                continue
            if not chunk:
                return None, buf
            buf += chunk

    def _handshake(self, conn):
        packet, buf = self._recv_packet(conn, b"")
        if not isinstance(packet, Connect):
            return None, b""
        with self._registry_lock:
            # a reconnect under the same client id takes the session over
            old = self._sessions.pop(packet.client_id, None)
            if old is None and len(self._sessions) >= self.cfg.max_sessions:
                conn.sendall(encode_packet(ConnAck(False, 3)))
                return None, b""
            session = _Session(conn, packet.client_id, packet.keep_alive_s, self.cfg.clock())
            self._sessions[packet.client_id] = session
        if old is not None:
            self._drop(old)
        conn.sendall(encode_packet(ConnAck(session_present=False, return_code=0)))
        self._bump("sessions_opened")
        return session, buf

    def _run_session(self, session, buf):
        conn = session.conn
        while not self._stopping.is_set() and not session.closed:
            out = decode_packet(buf)
            if out is NeedMoreBytes:
                try:
                    chunk = conn.recv(4096)
                except socket.timeout:
                    continue
                if not chunk:
                    return
                buf += chunk
                continue
            packet, used = out
            buf = buf[used:]
            session.last_activity = self.cfg.clock()
            if isinstance(packet, Publish):
                self._on_publish(session, packet)
            elif isinstance(packet, Subscribe):
                self._on_subscribe(session, packet)
            elif isinstance(packet, PingReq):
                self._send(session, PingResp())
            elif isinstance(packet, PubAck):
                pass  # no broker-side retransmission state to clear
            elif isinstance(packet, Disconnect):
                return
            else:
                raise ProtocolError(f"unexpected {type(packet).__name__} from client")

    # -- packet handling ------------------------------------------------

    def _on_publish(self, session, packet):
        self._bump("publishes_received")
        if packet.dup:
            self._bump("dup_publishes_received")
        if packet.qos == 1:
            with self._rng_lock:
                drop = self._rng.random() < self.cfg.ack_drop_rate
            if drop:
                self._bump("acks_dropped")
            else:
                self._send(session, PubAck(packet.packet_id))
        self._route(packet)

    def _on_subscribe(self, session, packet):
        granted = []
        with self._registry_lock:
            for topic_filter, qos in packet.filters:
                session.subscriptions.append((topic_filter, qos))
                granted.append(qos)
        self._send(session, SubAck(packet_id=packet.packet_id, return_codes=tuple(granted)))

    def _route(self, packet):
        with self._registry_lock:
            targets = []
            for session in self._sessions.values():
                matched = [
                    qos
                    for topic_filter, qos in session.subscriptions
                    if topic_matches(topic_filter, packet.topic)
                ]
                if matched:
                    # one copy per session even when several filters match
                    targets.append((session, min(packet.qos, max(matched))))
        for session, out_qos in targets:
            pid = None
            if out_qos == 1:
                with session.write_lock:
                    pid = session.next_pid
                    session.next_pid = pid % 0xFFFF + 1
            out = Publish(
                topic=packet.topic,
                payload=packet.payload,
                qos=out_qos,
                packet_id=pid,
                # carried through so downstream duplicate handling is observable
                dup=packet.dup and out_qos == 1,
                retain=False,
            )
            try:
                self._send(session, out)
                self._bump("messages_delivered")
            except OSError:
                self._drop(session)

    def _send(self, session, packet):
        wire = encode_packet(packet)
        with session.write_lock:
            session.conn.sendall(wire)

    # -- expiry and shutdown ---------------------------------------------

    def _sweep_loop(self):
        while not self._stopping.wait(self.cfg.sweep_interval_s):
            now = self.cfg.clock()
            with self._registry_lock:
                victims = [
                    s
                    for s in self._sessions.values()
                    if s.keep_alive_s > 0
                    and now - s.last_activity > s.keep_alive_s * self.cfg.keep_alive_grace
                ]
            for session in victims:
                self._bump("sessions_expired")
                self._drop(session)

    def _drop(self, session):
        session.closed = True
        try:
            session.conn.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        try:
            session.conn.close()
        except OSError:
            pass

    def _unregister(self, session):
        session.closed = True
        with self._registry_lock:
            if self._sessions.get(session.client_id) is session:
                del self._sessions[session.client_id]

    def session_count(self) -> int:
        with self._registry_lock:
            return len(self._sessions)

    def stop(self):
        """Close the listener and every session; clients observe the loss."""
        self._stopping.set()
        try:
            self._listener.close()
        except OSError:
            pass
        with self._registry_lock:
            sessions = list(self._sessions.values())
        for session in sessions:
            self._drop(session)
        self._accept_thread.join(timeout=2.0)
        self._sweeper.join(timeout=2.0)
        for t in self._threads:
            t.join(timeout=2.0)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.stop()


def broker_start(cfg: BrokerConfig = None) -> Broker:
    """Bind and start serving; StartupError if the port is taken."""
    return Broker(cfg or BrokerConfig())


def broker_stop(broker: Broker):
    broker.stop()
