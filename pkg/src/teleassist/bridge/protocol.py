"""Protocol v1: length-prefixed JSON text frames over a byte stream.

Frame layout: ASCII decimal payload length, a newline, then that many bytes
of UTF-8 JSON. Self-describing messages keyed by "type"; unknown fields are
tolerated (forward compatibility) and reported as warnings.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from ..worldmodel import check_rot3
from ..sim.traces import OperatorCommand

PROTOCOL_VERSION = "v1"
MAX_FRAME_BYTES = 1 << 20
STALE_COMMAND_S = 2.0

COMMAND_FIELDS = {"type", "seq", "t", "left", "right", "grip", "pads", "mode"}


class ProtocolError(ValueError):
    pass


def encode_frame(message: dict) -> bytes:
    payload = json.dumps(message).encode("utf-8")
    if len(payload) > MAX_FRAME_BYTES:
        raise ProtocolError(f"frame too large: {len(payload)} bytes")
    return str(len(payload)).encode("ascii") + b"\n" + payload


class FrameDecoder:
    """Incremental decoder: feed bytes, collect complete messages. A partial
    frame is held until its remaining bytes arrive; it is never surfaced."""

    def __init__(self):
        self._buf = bytearray()

    def feed(self, data: bytes) -> list[dict]:
        self._buf.extend(data)
        out = []
        while True:
            sep = self._buf.find(b"\n")
            if sep < 0:
                if len(self._buf) > 32:
                    raise ProtocolError("missing length prefix terminator")
                break
            head = bytes(self._buf[:sep])
            try:
                length = int(head.decode("ascii"))
            except (UnicodeDecodeError, ValueError):
                raise ProtocolError(f"bad length prefix {head!r}") from None
            if length < 0 or length > MAX_FRAME_BYTES:
                raise ProtocolError(f"bad frame length {length}")
            if len(self._buf) - sep - 1 < length:
                break  # truncated: wait for the rest
            payload = bytes(self._buf[sep + 1 : sep + 1 + length])
            del self._buf[: sep + 1 + length]
            try:
                msg = json.loads(payload.decode("utf-8"))
            except (UnicodeDecodeError, json.JSONDecodeError) as exc:
                raise ProtocolError(f"bad frame payload: {exc}") from exc
            if not isinstance(msg, dict) or "type" not in msg:
                raise ProtocolError("frame is not a typed message")
            out.append(msg)
        return out

    @property
    def pending_bytes(self) -> int:
        return len(self._buf)


@dataclass(frozen=True)
class ParsedCommand:
    seq: int
    command: OperatorCommand
    warnings: tuple[str, ...] = ()


def _vec(value, n, field):
    try:
        arr = np.asarray(value, dtype=float).reshape(n)
    except (TypeError, ValueError):
        raise ProtocolError(f"{field}: expected {n} numbers") from None
    if not np.all(np.isfinite(arr)):
        raise ProtocolError(f"{field}: non-finite values")
    return arr


def parse_command(msg: dict) -> ParsedCommand:
    """Validate a command message; raises ProtocolError naming the field."""
    if msg.get("type") != "command":
        raise ProtocolError("type: expected 'command'")
    seq = msg.get("seq")
    if not isinstance(seq, int) or seq < 0:
        raise ProtocolError("seq: expected a nonnegative integer")
    sides = {}
    for side in ("left", "right"):
        body = msg.get(side)
        if not isinstance(body, dict):
            raise ProtocolError(f"{side}: expected an object with pos and rot")
        pos = _vec(body.get("pos"), 3, f"{side}.pos")
        rot = _vec(body.get("rot"), 9, f"{side}.rot").reshape(3, 3)
        try:
            check_rot3(rot, tol=1e-6)
        except ValueError as exc:
            raise ProtocolError(f"{side}.rot: {exc}") from exc
        sides[side] = (pos, rot)
    grip = msg.get("grip", [False, False])
    if not isinstance(grip, list) or len(grip) != 2:
        raise ProtocolError("grip: expected [left, right] booleans")
    pads = msg.get("pads", [0.0, 0.0, 0.0])
    pads_arr = _vec(pads, 3, "pads")
    mode = msg.get("mode")
    if mode is not None and mode not in ("independent", "top_down_front", "side"):
        raise ProtocolError(f"mode: unknown value {mode!r}")
    warnings = tuple(f"unknown field {k!r} ignored" for k in msg if k not in COMMAND_FIELDS)
    cmd = OperatorCommand(
        left_pos=sides["left"][0],
        right_pos=sides["right"][0],
        left_rot=sides["left"][1],
        right_rot=sides["right"][1],
        grip_left=bool(grip[0]),
        grip_right=bool(grip[1]),
        pads=tuple(pads_arr),
        mode_request=mode,
    )
    return ParsedCommand(seq, cmd, warnings)


def command_message(seq: int, cmd: OperatorCommand, t: float = 0.0) -> dict:
    return {
        "type": "command",
        "seq": seq,
        "t": t,
        "left": {"pos": cmd.left_pos.tolist(), "rot": cmd.left_rot.reshape(9).tolist()},
        "right": {"pos": cmd.right_pos.tolist(), "rot": cmd.right_rot.reshape(9).tolist()},
        "grip": [bool(cmd.grip_left), bool(cmd.grip_right)],
        "pads": list(cmd.pads),
        "mode": cmd.mode_request,
    }


def state_message(record: dict, applied_seq: int, safety_hold: bool) -> dict:
    """Build the per-tick state broadcast from an engine log record."""
    return {
        "type": "state",
        "tick": record["tick"],
        "t": record["t"],
        "real": record["real"],
        "joints_left": record["joints_left"],
        "joints_right": record["joints_right"],
        "base": record["base"],
        "w": record["w"],
        "mode": record["mode"],
        "grip": record["grip"],
        "attached": record["attached"],
        "objects": record["objects"],
        "violation": record["viol"],
        "clearance": record["clear"],
        "track_err": record["track_err"],
        "solver": record["solver"],
        "applied_seq": applied_seq,
        "safety_hold": bool(safety_hold),
        "done": record["done"],
    }
