"""Single-session TCP bridge between a live simulation and an operator console.

Network ingress runs on its own threads; the only shared points with the
tick loop are a latest-wins command mailbox and a bounded outbound state
buffer, so the simulation never blocks on a slow or absent consumer.
"""

from __future__ import annotations

import socket
import threading
import time
from collections import deque

from ..sim.operator_model import Observation
from ..sim.traces import OperatorCommand
from .protocol import (
    PROTOCOL_VERSION,
    STALE_COMMAND_S,
    FrameDecoder,
    ProtocolError,
    encode_frame,
    parse_command,
    state_message,
)


class CommandMailbox:
    """Latest-wins slot: stale or out-of-order commands are discarded."""

    def __init__(self):
        self._lock = threading.Lock()
        self._seq = -1
        self._command: OperatorCommand | None = None
        self._received_at: float | None = None

    def put(self, seq: int, command: OperatorCommand, now: float | None = None) -> bool:
        """Deposit a command; returns False when seq is not newer than the
        last applied one."""
        now = time.monotonic() if now is None else now
        with self._lock:
            if seq <= self._seq:
                return False
            self._seq = seq
            self._command = command
            self._received_at = now
            return True

    def latest(self, now: float | None = None) -> tuple[OperatorCommand | None, int, bool]:
        """(command, seq, stale). command is None before the first deposit."""
        now = time.monotonic() if now is None else now
        with self._lock:
            if self._command is None:
                return None, -1, False
            stale = (now - self._received_at) > STALE_COMMAND_S
            return self._command, self._seq, stale


class BridgeSource:
    """Operator source adapter: feeds mailbox commands into the engine and
    raises the hold flag when the session goes silent."""

    def __init__(self, mailbox: CommandMailbox):
        self.mailbox = mailbox
        self.safety_hold = False
        self.applied_seq = -1

    def command_for_tick(self, tick: int, t: float, obs: Observation) -> OperatorCommand | None:
        cmd, seq, stale = self.mailbox.latest()
        self.safety_hold = stale or cmd is None
        if cmd is None or stale:
            return None  # engine holds the previous command
        self.applied_seq = seq
        return cmd

    def finished(self, t: float) -> bool:
        return False  # bounded by the scenario's max duration


class _Session:
    def __init__(self, sock: socket.socket, server: "BridgeServer"):
        self.sock = sock
        self.server = server
        self.alive = True
        self.handshaken = False
        self.outbound: deque[tuple[bytes, bool]] = deque()  # (frame, droppable)
        self.dropped = 0
        self.lock = threading.Lock()
        self.wake = threading.Condition(self.lock)

    def send(self, message: dict):
        """Queue a frame. When the consumer lags, the oldest *state* frames
        are dropped (a gap marker reports how many); command replies are
        never discarded."""
        droppable = message.get("type") == "state"
        frame = encode_frame(message)
        with self.wake:
            if len(self.outbound) >= self.server.outbound_limit:
                for i, (_, can_drop) in enumerate(self.outbound):
                    if can_drop:
                        del self.outbound[i]
                        self.dropped += 1
                        break
            self.outbound.append((frame, droppable))
            self.wake.notify()

    def run(self):
        reader = threading.Thread(target=self._read_loop, daemon=True)
        writer = threading.Thread(target=self._write_loop, daemon=True)
        reader.start()
        writer.start()
        reader.join()
        with self.wake:
            self.alive = False
            self.wake.notify()
        writer.join(timeout=1.0)
        try:
            self.sock.close()
        except OSError:
            pass

    def _read_loop(self):
        decoder = FrameDecoder()
        self.sock.settimeout(0.5)
        while self.alive and self.server.running:
            try:
                data = self.sock.recv(65536)
            except socket.timeout:
                continue
            except OSError:
                break
            if not data:
                break
            try:
                messages = decoder.feed(data)
            except ProtocolError as exc:
                self.send({"type": "error", "error": "bad_frame", "detail": str(exc)})
                break
            for msg in messages:
                self._handle(msg)
        self.alive = False

    def _handle(self, msg: dict):
        kind = msg.get("type")
        if not self.handshaken:
            if kind != "hello" or msg.get("version") != PROTOCOL_VERSION:
                self.send(
                    {
                        "type": "error",
                        "error": "version_mismatch",
                        "expected": PROTOCOL_VERSION,
                        "got": msg.get("version"),
                    }
                )
                self.alive = False
                return
            self.handshaken = True
            self.send({"type": "welcome", "version": PROTOCOL_VERSION, "scene": self.server.scene})
            snapshot = self.server.latest_state
            if snapshot is not None:
                self.send(snapshot)
            return
        if kind == "command":
            try:
                parsed = parse_command(msg)
            except ProtocolError as exc:
                self.send({"type": "error", "error": "bad_command", "detail": str(exc),
                           "seq": msg.get("seq")})
                return
            accepted = self.server.mailbox.put(parsed.seq, parsed.command)
            reply = {"type": "ack", "seq": parsed.seq, "accepted": accepted}
            if parsed.warnings:
                reply["warnings"] = list(parsed.warnings)
            self.send(reply)
        elif kind == "ping":
            self.send({"type": "pong", "t": msg.get("t")})
        else:
            self.send({"type": "error", "error": "unknown_type", "detail": str(kind)})

    def _write_loop(self):
        while True:
            with self.wake:
                while self.alive and not self.outbound and self.server.running:
                    self.wake.wait(timeout=0.5)
                if not self.outbound and (not self.alive or not self.server.running):
                    return
                if self.dropped:
                    frame = encode_frame({"type": "gap", "dropped": self.dropped})
                    self.dropped = 0
                elif self.outbound:
                    frame = self.outbound.popleft()[0]
                else:
                    frame = None
            if frame is None:
                continue
            try:
                self.sock.sendall(frame)
            except OSError:
                self.alive = False
                return


class BridgeServer:
    """Accepts one operator session at a time and broadcasts tick state."""

    def __init__(self, scene: dict, port: int = 0, host: str = "127.0.0.1",
                 outbound_limit: int = 64):
        self.scene = scene
        self.mailbox = CommandMailbox()
        self.source = BridgeSource(self.mailbox)
        self.outbound_limit = outbound_limit
        self.latest_state: dict | None = None
        self.running = True
        self._session: _Session | None = None
        self._listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._listener.bind((host, port))
        self._listener.listen(2)
        self.port = self._listener.getsockname()[1]
        self._accept_thread = threading.Thread(target=self._accept_loop, daemon=True)
        self._accept_thread.start()

    def _accept_loop(self):
        self._listener.settimeout(0.5)
        while self.running:
            try:
                sock, _addr = self._listener.accept()
            except socket.timeout:
                continue
            except OSError:
                break
            if self._session is not None and self._session.alive:
                try:
                    sock.sendall(encode_frame({"type": "error", "error": "busy"}))
                    sock.close()
                except OSError:
                    pass
                continue
            session = _Session(sock, self)
            self._session = session
            threading.Thread(target=session.run, daemon=True).start()

    def publish(self, record: dict):
        """Called by the tick loop after every step; never blocks."""
        msg = state_message(record, self.source.applied_seq, self.source.safety_hold)
        self.latest_state = msg
        session = self._session
        if session is not None and session.alive and session.handshaken:
            session.send(msg)

    def close(self):
        self.running = False
        try:
            self._listener.close()
        except OSError:
            pass
        session = self._session
        if session is not None:
            session.alive = False
