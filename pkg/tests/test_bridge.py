import json
import socket
import threading
import time
from pathlib import Path

import numpy as np
import pytest

from teleassist.bridge.protocol import (
    PROTOCOL_VERSION,
    FrameDecoder,
    ProtocolError,
    command_message,
    encode_frame,
    parse_command,
    state_message,
)
from teleassist.bridge.server import BridgeServer, BridgeSource, CommandMailbox
from teleassist.sim.engine import Engine
from teleassist.sim.logio import header_record
from teleassist.sim.scenario import load_scenario
from teleassist.sim.traces import OperatorCommand
from teleassist.worldmodel import rot_rpy, rot_y

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


def random_command(rng) -> OperatorCommand:
    return OperatorCommand(
        left_pos=rng.uniform(-1, 1, 3),
        right_pos=rng.uniform(-1, 1, 3),
        left_rot=rot_rpy(*rng.uniform(-np.pi, np.pi, 3)),
        right_rot=rot_rpy(*rng.uniform(-np.pi, np.pi, 3)),
        grip_left=bool(rng.integers(0, 2)),
        grip_right=bool(rng.integers(0, 2)),
        pads=tuple(rng.uniform(-1, 1, 3)),
        mode_request=[None, "independent", "side", "top_down_front"][rng.integers(0, 4)],
    )


class TestCodec:
    def test_round_trip_identity_1000(self):
        rng = np.random.default_rng(81)
        decoder = FrameDecoder()
        for seq in range(1000):
            msg = command_message(seq, random_command(rng), t=seq * 0.05)
            out = decoder.feed(encode_frame(msg))
            assert len(out) == 1
            assert out[0] == msg  # identity round trip, exact floats included

    def test_chunked_feed(self):
        rng = np.random.default_rng(82)
        msgs = [command_message(i, random_command(rng)) for i in range(50)]
        stream = b"".join(encode_frame(m) for m in msgs)
        decoder = FrameDecoder()
        got = []
        pos = 0
        while pos < len(stream):
            n = int(rng.integers(1, 17))
            got.extend(decoder.feed(stream[pos : pos + n]))
            pos += n
        assert got == msgs
        assert decoder.pending_bytes == 0

    def test_truncated_frame_surfaces_nothing(self):
        msg = {"type": "ping", "t": 1.0}
        frame = encode_frame(msg)
        decoder = FrameDecoder()
        assert decoder.feed(frame[:-3]) == []
        assert decoder.pending_bytes > 0
        assert decoder.feed(frame[-3:]) == [msg]

    def test_bad_length_prefix_raises(self):
        decoder = FrameDecoder()
        with pytest.raises(ProtocolError):
            decoder.feed(b"xyz\n{}")

    def test_unknown_fields_warn_but_parse(self):
        rng = np.random.default_rng(83)
        msg = command_message(1, random_command(rng))
        msg["future_extension"] = {"a": 1}
        parsed = parse_command(msg)
        assert parsed.seq == 1
        assert any("future_extension" in w for w in parsed.warnings)

    def test_bad_rotation_names_field(self):
        rng = np.random.default_rng(84)
        msg = command_message(2, random_command(rng))
        msg["left"]["rot"] = [2, 0, 0, 0, 1, 0, 0, 0, 1]
        with pytest.raises(ProtocolError) as err:
            parse_command(msg)
        assert "left.rot" in str(err.value)


class TestMailbox:
    def test_latest_wins_and_sequence_order(self):
        rng = np.random.default_rng(85)
        box = CommandMailbox()
        c1, c2, c3 = (random_command(rng) for _ in range(3))
        assert box.put(5, c1, now=0.0)
        assert not box.put(3, c2, now=0.1)  # lower sequence discarded
        cmd, seq, stale = box.latest(now=0.2)
        assert seq == 5 and cmd is c1 and not stale
        assert box.put(9, c3, now=0.3)
        cmd, seq, _ = box.latest(now=0.4)
        assert seq == 9 and cmd is c3

    def test_staleness_after_two_seconds(self):
        rng = np.random.default_rng(86)
        box = CommandMailbox()
        box.put(1, random_command(rng), now=0.0)
        assert not box.latest(now=1.9)[2]
        assert box.latest(now=2.1)[2]


class TestOutboundPolicy:
    def test_lagging_consumer_drops_oldest_state_keeps_replies(self):
        from teleassist.bridge.server import _Session

        class StubServer:
            outbound_limit = 4
            running = True

        session = _Session(socket.socket(), StubServer())
        for k in range(4):
            session.send({"type": "state", "tick": k})
        session.send({"type": "ack", "seq": 1})  # overflow: a state drops, not the ack
        session.send({"type": "ack", "seq": 2})
        assert session.dropped == 2
        payloads = [f.decode().split("\n", 1)[1] for f, _ in session.outbound]
        assert sum("ack" in p for p in payloads) == 2
        assert '"tick": 0' not in "".join(payloads)  # oldest state went first
        assert '"tick": 3' in "".join(payloads)


class TestHeadlessEquivalence:
    def test_bridge_without_session_holds_like_empty_trace(self, tmp_path):
        from tests.test_sim import hold_trace, minimal_scenario_dict
        from teleassist.sim.scenario import scenario_from_dict

        trace = hold_trace(tmp_path / "hold.jsonl", n=31)
        spec = scenario_from_dict(minimal_scenario_dict(trace, goals=False))

        eng_trace = Engine(spec)
        for _ in range(30):
            t = eng_trace.tick * spec.delta
            eng_trace.step(
                eng_trace.operator_source.command_for_tick(eng_trace.tick, t, eng_trace.observation())
            )

        source = BridgeSource(CommandMailbox())
        eng_bridge = Engine(spec, operator_source=source)
        for _ in range(30):
            t = eng_bridge.tick * spec.delta
            eng_bridge.step(source.command_for_tick(eng_bridge.tick, t, eng_bridge.observation()))
        assert np.array_equal(eng_trace.realized, eng_bridge.realized)
        assert source.safety_hold  # no operator: the hold flag stays up


class _Client:
    """Minimal blocking test client for the wire protocol."""

    def __init__(self, port):
        self.sock = socket.create_connection(("127.0.0.1", port), timeout=5.0)
        self.decoder = FrameDecoder()
        self.inbox = []

    def send(self, msg):
        self.sock.sendall(encode_frame(msg))

    def recv_until(self, predicate, timeout=5.0):
        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            for i, msg in enumerate(self.inbox):
                if predicate(msg):
                    return self.inbox.pop(i)
            try:
                data = self.sock.recv(65536)
            except socket.timeout:
                continue
            if not data:
                break
            self.inbox.extend(self.decoder.feed(data))
        raise TimeoutError("expected message not received")

    def close(self):
        self.sock.close()


@pytest.fixture
def live_server():
    spec = load_scenario(SCENARIOS / "single_arm_shelf.yaml")
    server = BridgeServer(scene=header_record(spec, True, spec.seed), port=0)
    engine = Engine(spec, operator_source=server.source)
    stop = threading.Event()

    def tick_loop():
        while not stop.is_set() and engine.tick < 2000:
            t = engine.tick * spec.delta
            cmd = server.source.command_for_tick(engine.tick, t, engine.observation())
            record = engine.step(cmd)
            server.publish(record)
            time.sleep(0.005)  # accelerated ticks keep the test quick

    thread = threading.Thread(target=tick_loop, daemon=True)
    thread.start()
    yield server, spec
    stop.set()
    thread.join(timeout=5.0)
    server.close()


class TestLiveSession:
    def test_handshake_and_round_trip(self, live_server):
        server, spec = live_server
        client = _Client(server.port)
        client.send({"type": "hello", "version": PROTOCOL_VERSION})
        welcome = client.recv_until(lambda m: m["type"] == "welcome")
        assert welcome["version"] == PROTOCOL_VERSION
        assert welcome["scene"]["arms"]["left"]["dh_a"]  # scene carries kinematics

        rng = np.random.default_rng(87)
        hold = OperatorCommand(
            [0.35, 0.25, 0.30], [0.35, -0.25, 0.30], rot_y(np.pi / 2), rot_y(np.pi / 2)
        )
        failures = 0
        for seq in range(1000):
            client.send(command_message(seq + 1, hold, t=seq * 0.01))
            try:
                ack = client.recv_until(lambda m: m["type"] == "ack" and m["seq"] == seq + 1)
            except (TimeoutError, ProtocolError):
                failures += 1
        assert failures == 0

        # a state emitted after the burst reports the applied sequence number
        state = client.recv_until(lambda m: m["type"] == "state" and m["applied_seq"] >= 1)
        assert len(state["real"]) == 6
        client.close()

    def test_version_mismatch_rejected(self, live_server):
        server, _ = live_server
        client = _Client(server.port)
        client.send({"type": "hello", "version": "v0"})
        err = client.recv_until(lambda m: m["type"] == "error")
        assert err["error"] == "version_mismatch"
        client.close()

    def test_bad_command_keeps_session(self, live_server):
        server, _ = live_server
        client = _Client(server.port)
        client.send({"type": "hello", "version": PROTOCOL_VERSION})
        client.recv_until(lambda m: m["type"] == "welcome")
        bad = command_message(1, OperatorCommand(
            [0, 0, 0], [0, 0, 0], np.eye(3), np.eye(3)))
        bad["left"]["rot"] = [1, 0, 0, 0, 1, 0, 0, 0, 2]
        client.send(bad)
        err = client.recv_until(lambda m: m["type"] == "error")
        assert err["error"] == "bad_command" and "left.rot" in err["detail"]
        # session still alive: a good command is acked
        good = command_message(2, OperatorCommand(
            [0.35, 0.25, 0.30], [0.35, -0.25, 0.30], rot_y(np.pi / 2), rot_y(np.pi / 2)))
        client.send(good)
        ack = client.recv_until(lambda m: m["type"] == "ack")
        assert ack["seq"] == 2 and ack["accepted"]
        client.close()
