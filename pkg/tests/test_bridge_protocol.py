"""Frame codec tests for the external score-server protocol (client side)."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from memometer import BridgeError, ScoreFrame, decode_frame
from memometer.score import (
    FRAME_HEADER,
    FRAME_MAGIC,
    KIND_ERROR,
    KIND_REQUEST,
    KIND_RESPONSE,
    IncompleteFrame,
)


def random_frame(rng):
    kind = int(rng.integers(0, 3))
    m = float(rng.uniform(-10, 10))
    if kind == KIND_ERROR:
        size = int(rng.integers(0, 64))
        message = "".join(chr(rng.integers(0x20, 0x2000)) for _ in range(size))
        return ScoreFrame(kind=kind, m=m, dims=0, message=message)
    dims = int(rng.integers(1, 8))
    points = int(rng.integers(0, 16))
    values = rng.standard_normal(points * dims).astype("<f4")
    return ScoreFrame(kind=kind, m=m, dims=dims, values=values)


class TestRoundTrip:
    def test_ten_thousand_random_frames(self):
        rng = np.random.default_rng(2024)
        for _ in range(10_000):
            frame = random_frame(rng)
            decoded, used = decode_frame(frame.encode())
            assert used == len(frame.encode())
            assert decoded.kind == frame.kind
            assert decoded.m == frame.m
            if frame.kind == KIND_ERROR:
                assert decoded.message == frame.message
            else:
                assert decoded.dims == frame.dims
                assert np.array_equal(decoded.values, frame.values)

    @settings(max_examples=300, deadline=None)
    @given(
        kind=st.sampled_from([KIND_REQUEST, KIND_RESPONSE]),
        m=st.floats(allow_nan=False, allow_infinity=False, width=64),
        dims=st.integers(min_value=1, max_value=16),
        points=st.integers(min_value=0, max_value=32),
        data=st.data(),
    )
    def test_data_frame_property(self, kind, m, dims, points, data):
        raw = data.draw(st.lists(
            st.floats(allow_nan=False, allow_infinity=False, width=32),
            min_size=points * dims, max_size=points * dims))
        frame = ScoreFrame(kind=kind, m=m, dims=dims,
                           values=np.array(raw, dtype="<f4"))
        decoded, _ = decode_frame(frame.encode())
        assert decoded.m == m and decoded.dims == dims
        assert np.array_equal(decoded.values, frame.values)

    @settings(max_examples=200, deadline=None)
    @given(message=st.text(max_size=200),
           m=st.floats(allow_nan=False, allow_infinity=False))
    def test_error_frame_property(self, message, m):
        frame = ScoreFrame(kind=KIND_ERROR, m=m, dims=0, message=message)
        decoded, _ = decode_frame(frame.encode())
        assert decoded.message == message and decoded.m == m


class TestMalformed:
    def test_bad_magic(self):
        frame = ScoreFrame(kind=KIND_REQUEST, m=1.0, dims=2,
                           values=np.zeros(2, dtype="<f4")).encode()
        with pytest.raises(BridgeError):
            decode_frame(b"XXXX" + frame[4:])

    def test_bad_kind(self):
        header = FRAME_HEADER.pack(FRAME_MAGIC, 9, 1.0, 0, 2)
        with pytest.raises(BridgeError):
            decode_frame(header)

    def test_incomplete_header(self):
        with pytest.raises(IncompleteFrame):
            decode_frame(b"SCR1\x00")

    def test_incomplete_payload(self):
        frame = ScoreFrame(kind=KIND_RESPONSE, m=0.0, dims=2,
                           values=np.zeros(4, dtype="<f4")).encode()
        with pytest.raises(IncompleteFrame) as err:
            decode_frame(frame[:-3])
        assert err.value.missing == 3

    def test_streaming_concatenation(self):
        rng = np.random.default_rng(7)
        frames = [random_frame(rng) for _ in range(20)]
        blob = b"".join(f.encode() for f in frames)
        out = []
        while blob:
            frame, used = decode_frame(blob)
            out.append(frame)
            blob = blob[used:]
        assert len(out) == 20


class TestClient:
    def test_absent_server_fails_before_any_work(self):
        from memometer import BridgeScoreProvider

        with pytest.raises(BridgeError):
            BridgeScoreProvider("tcp:127.0.0.1:9", timeout=0.5)

    def test_bad_endpoint_spec(self):
        from memometer import BridgeScoreProvider

        with pytest.raises(BridgeError):
            BridgeScoreProvider("carrier-pigeon:coop")

    def test_large_batches_split_into_bounded_frames(self, monkeypatch):
        """Batches above the frame value cap go out as several lock-step
        request frames; the client reassembles the replies in order."""
        import memometer.score as score_mod
        from memometer import BridgeScoreProvider

        monkeypatch.setattr(score_mod, "MAX_FRAME_VALUES", 16)

        class EchoTransport:
            """Loopback: replies to each request with its negated payload."""

            def __init__(self):
                self.request_sizes = []
                self.outbox = b""

            def send(self, data):
                frame, used = decode_frame(data)
                assert used == len(data)
                self.request_sizes.append(frame.values.size)
                reply = score_mod.ScoreFrame(
                    kind=score_mod.KIND_RESPONSE, m=frame.m, dims=frame.dims,
                    values=-frame.values)
                self.outbox += reply.encode()

            def recv(self, n):
                data, self.outbox = self.outbox[:n], self.outbox[n:]
                return data

            def close(self):
                pass

        provider = BridgeScoreProvider.__new__(BridgeScoreProvider)
        provider.endpoint = "test"
        provider.timeout = 1.0
        provider._transport = EchoTransport()
        provider._buf = b""

        X = np.arange(30.0).reshape(10, 3)  # 30 values > cap of 16
        out = provider.evaluate(X, m=0.5)
        assert np.array_equal(out, -X.astype(np.float32).astype(np.float64))
        sizes = provider._transport.request_sizes
        assert len(sizes) == 2
        assert all(s <= 16 for s in sizes)
        assert sum(sizes) == 30
