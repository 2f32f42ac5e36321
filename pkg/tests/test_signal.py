import numpy as np
import pytest
from hypothesis import given, strategies as st

from bcisim.errors import ConfigurationError, IngestionError
from bcisim.signal import (ArrayConfig, SignalChunk, WindowSpec, ingest_raw, synth_generate, window_count, windows,
                           write_raw)


def chunk(n):
    return SignalChunk(0, 0, np.arange(n) % 1000)


def test_exact_tiling():
    assert [w.start for w in windows(chunk(240), WindowSpec(120, 120))] == [0, 120]


def test_step_one_sliding():
    assert [w.start for w in windows(chunk(121), WindowSpec(120, 1))] == [0, 1]


def test_too_short_is_empty():
    assert windows(chunk(100), WindowSpec(120, 120)) == []


def test_bad_step_rejected():
    with pytest.raises(ConfigurationError):
        WindowSpec(10, 11)


@given(n=st.integers(1, 600), length=st.integers(1, 150), step=st.integers(1, 150))
def test_window_count_formula(n, length, step):
    if step > length:
        step = length
    spec = WindowSpec(length, step)
    ws = windows(chunk(n), spec)
    assert len(ws) == window_count(n, spec) == (0 if n < length else (n - length) // step + 1)
    assert all(w.start % step == 0 and w.start + length <= n for w in ws)


def test_chunk_rejects_out_of_range_samples():
    with pytest.raises(ValueError):
        SignalChunk(0, 0, np.array([40000]))
    with pytest.raises(ValueError):
        SignalChunk(0, -1, np.array([1]))


@pytest.mark.parametrize("kind", ["sine", "noise", "seizure-burst", "spike-train"])
def test_generators_are_deterministic(kind):
    cfg = ArrayConfig(electrodes=4)
    a = synth_generate(kind, 1, cfg, 3000)
    b = synth_generate(kind, 1, cfg, 3000)
    assert all(x == y for x, y in zip(a.chunks, b.chunks))


def test_full_array_sine_deterministic():
    a = synth_generate("sine", 1, ArrayConfig(), 3000)
    b = synth_generate("sine", 1, ArrayConfig(), 3000)
    assert len(a.chunks) == 96 and a.chunks == b.chunks


def test_seed_sensitivity():
    cfg = ArrayConfig(electrodes=2)
    a = synth_generate("noise", 1, cfg, 500)
    b = synth_generate("noise", 2, cfg, 500)
    assert not np.array_equal(a.chunks[0].samples, b.chunks[0].samples)


def test_unknown_kind():
    with pytest.raises(ConfigurationError):
        synth_generate("chirp", 0)


def test_spike_positions_hold_templates():
    ss = synth_generate("spike-train", 7, ArrayConfig(electrodes=2), 30000)
    assert ss.spikes
    L = ss.templates.shape[1]
    for s in ss.spikes:
        seg = ss.chunks[s.electrode_id].samples[s.position:s.position + L].astype(float)
        scores = [np.corrcoef(seg, t)[0, 1] for t in ss.templates]
        # the embedded template correlates with the segment far better than noise would
        assert scores[s.template] > 0.8


def test_ingest_little_endian(tmp_path):
    p = tmp_path / "x.raw"
    p.write_bytes(bytes([1, 0, 2, 0]))
    e0, e1 = ingest_raw(p, ArrayConfig(electrodes=2))
    assert e0.samples.tolist() == [1] and e1.samples.tolist() == [2]


def test_ingest_truncated_names_offset(tmp_path):
    p = tmp_path / "x.raw"
    p.write_bytes(bytes(5))
    with pytest.raises(IngestionError) as ei:
        ingest_raw(p, ArrayConfig(electrodes=2))
    assert ei.value.offset == 4


@given(seed=st.integers(0, 1000), kind=st.sampled_from(["sine", "noise", "spike-train", "seizure-burst"]))
def test_raw_roundtrip(tmp_path_factory, seed, kind):
    cfg = ArrayConfig(electrodes=3)
    ss = synth_generate(kind, seed, cfg, 400)
    p = tmp_path_factory.mktemp("raw") / "d.raw"
    write_raw(p, ss.chunks, cfg)
    assert ingest_raw(p) == ss.chunks
