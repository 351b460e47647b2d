import numpy as np
import pytest

from ppgnet.melspec import N_MEL, StreamingMel, frame_count, log_mel


@pytest.fixture
def rng():
    return np.random.default_rng(42)


def test_frame_count_formula():
    assert frame_count(16000) == 26
    assert frame_count(640) == 2
    assert frame_count(1) == 1


def test_batch_shape_and_finite(rng):
    mel = log_mel(rng.normal(0, 0.2, 12000))
    assert mel.shape == (frame_count(12000), N_MEL)
    assert np.all(np.isfinite(mel))


def test_silence_floor():
    mel = log_mel(np.zeros(4000))
    assert np.allclose(mel, np.log(1e-6))


def test_streaming_equals_batch(rng):
    for L in (641, 2560, 2561, 9999, 16000, 31999):
        x = rng.normal(0, 0.2, L)
        want = log_mel(x)
        s = StreamingMel()
        rows = [s.feed(x[i : i + 2560]) for i in range(0, L, 2560)]
        rows.append(s.flush())
        got = np.vstack([r for r in rows if len(r)])
        assert np.array_equal(got, want), L


def test_chunk_sizes_do_not_matter(rng):
    x = rng.normal(0, 0.2, 9000)
    want = log_mel(x)
    for sizes in ((1000,), (160, 640, 2560), (9000,)):
        s = StreamingMel()
        rows = []
        pos = 0
        i = 0
        while pos < len(x):
            n = sizes[i % len(sizes)]
            rows.append(s.feed(x[pos : pos + n]))
            pos += n
            i += 1
        rows.append(s.flush())
        got = np.vstack([r for r in rows if len(r)])
        assert np.array_equal(got, want)
