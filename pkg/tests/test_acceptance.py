"""Acceptance suite: one test per criterion, AC1 through AC10.

Each test attaches a short measurement summary; the terminal summary at
the end of the run prints one PASS/FAIL line per criterion.
"""
import math
import time

import numpy as np
import pytest
from scipy.stats import spearmanr

from bcisim.apps import SvmModel, hierarchical_decision
from bcisim.codec import crc32, decode_batch, encode_batch
from bcisim.config import ClusterConfig, ExperimentSpec
from bcisim.experiments import (burst_recording, degraded_confirm_stability, frame_error_rate, query_cluster,
                                random_instance, run_points, summarize)
from bcisim.lsh import CwsParams, SketchParams, dtw_hash, weighted_jaccard, weighted_minhash
from bcisim.network import Network, expected_frame_error, sntp_sync
from bcisim.packet import PacketType, npack, unpack
from bcisim.query import canned, run_query
from bcisim.scheduler import (hash_throughput_graph, reduced_solve, seizure_graph, solve, solve_instance,
                              spike_sort_graph)
from bcisim.signal import ArrayConfig, synth_generate
from bcisim.similarity import BandParam, dtw_banded, emd_1d, to_mass
from oracles.bit_packet import crc32_bitwise
from oracles.brute_ilp import best_value
from oracles.warp import transport_lp


@pytest.fixture
def detail(record_property):
    parts = []
    yield parts.append
    record_property("detail", "; ".join(parts))


def test_ac1_codec_roundtrip(detail):
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    bad_batches = 0
    for i in range(100_000):
        n = int(rng.integers(1, 48))
        h = rng.integers(0, int(rng.integers(1, 256)), size=n)
        if i % 3 == 0:
            h = np.repeat(h[: max(1, n // 4)], 4)[:n]
        bad_batches += decode_batch(encode_batch(h.tolist())).hashes != tuple(h.tolist())
    bad_frames = 0
    for _ in range(100_000):
        pl = rng.integers(0, 256, size=int(rng.integers(1, 257)), dtype=np.uint8).tobytes()
        f = rng.integers(0, [6, 256, 256, 256, 65536, 1 << 28])
        p = unpack(npack(pl, *(int(v) for v in f)))
        bad_frames += (p.payload, p.ptype, p.src, p.dst, p.flow_id, p.seq, p.sample_ts) != (pl, *(int(v) for v in f))
    check = crc32(b"123456789")
    elapsed = time.perf_counter() - t0
    detail(f"hash batches {bad_batches} corrupted of 100000")
    detail(f"frames {bad_frames} corrupted of 100000")
    detail(f"crc32('123456789')=0x{check:08X}")
    detail(f"{elapsed:.1f} s")
    assert bad_batches == 0 and bad_frames == 0
    assert check == 0xCBF43926 == crc32_bitwise(b"123456789")
    assert elapsed < 60


def test_ac2_similarity_degeneracies(detail):
    rng = np.random.default_rng(202)
    self_nonzero = radius1_off = emd_off = 0
    for _ in range(500):
        x = rng.integers(-3000, 3000, size=int(rng.integers(1, 200)))
        y = rng.integers(-3000, 3000, size=x.size)
        self_nonzero += dtw_banded(x, x, BandParam(int(rng.integers(1, 20)))).value != 0
        d = (x - y).astype(np.int64)
        radius1_off += dtw_banded(x, y, BandParam(1)).value != float(np.abs(d).sum())
        radius1_off += dtw_banded(x, y, BandParam(1), "squared").value != float((d * d).sum())
    for _ in range(500):
        L = int(rng.integers(1, 7))
        a, b = rng.integers(0, 30, size=L), rng.integers(0, 30, size=L)
        if a.sum() == 0 or b.sum() == 0:
            continue
        emd_off += abs(emd_1d(a, b).value - transport_lp(*to_mass(a, b))) > 1e-9
    detail(f"dtw(x,x)!=0: {self_nonzero}/500; radius-1 mismatches: {radius1_off}/1000; EMD vs LP: {emd_off}")
    assert self_nonzero == radius1_off == emd_off == 0


def test_ac3_lsh_locality(detail):
    cfg = ArrayConfig(electrodes=1)
    x = synth_generate("seizure-burst", 3, cfg, 120, burst_start=0, burst_length=120).chunks[0].samples.astype(float)
    rng = np.random.default_rng(0)
    P = float(np.mean(x ** 2))
    rates, dists = [], []
    for eps in (0.0, 0.02, 0.05, 0.1, 0.2, 0.3, 0.5, 0.7, 1.0, 1.5):
        y = x + eps * math.sqrt(P) * rng.normal(size=120)
        rates.append(np.mean([dtw_hash(x, SketchParams(8, 4, 8, seed=s), CwsParams(s)).value
                              == dtw_hash(y, SketchParams(8, 4, 8, seed=s), CwsParams(s)).value for s in range(300)]))
        dists.append(dtw_banded(x, y, BandParam(12)).value)
    rho = float(spearmanr(rates, dists).statistic)
    pairs = [({"00": 3, "01": 1}, {"00": 1, "01": 1, "10": 2}), ({"00": 5}, {"00": 5, "11": 5}),
             ({"00": 1, "01": 4, "11": 2}, {"01": 1, "10": 3, "11": 2})]
    worst = 0.0
    for u, v in pairs:
        hits = sum(weighted_minhash(u, CwsParams(s), key_space=4).value
                   == weighted_minhash(v, CwsParams(s), key_space=4).value for s in range(10_000))
        worst = max(worst, abs(hits / 10_000 - weighted_jaccard(u, v)))
    detail(f"spearman(collision rate, DTW distance)={rho:.3f}; max |CWS - weighted Jaccard|={worst:.4f} over 10^4 seeds")
    assert rho <= -0.8 and worst <= 0.05


def test_ac4_ilp_optimality(detail):
    rng = np.random.default_rng(404)
    mismatches = 0
    for _ in range(200):
        inst = random_instance(rng, z_max=50)
        A, b = inst.matrix()
        mismatches += abs(solve_instance(inst).objective - best_value(inst.weights, A, b, inst.ub)) > 1e-9
    cfg = ClusterConfig.default()
    red_full = 0
    for g in (seizure_graph, hash_throughput_graph, spike_sort_graph):
        for n in (2, 4, 8):
            red_full += abs(reduced_solve(g(), cfg.cluster(n)).objective - solve(g(), cfg.cluster(n)).objective) > 1e-6
    reduced_solve(seizure_graph(), cfg.cluster(64))
    worst = 0.0
    for n in (16, 32, 64):
        t0 = time.perf_counter()
        reduced_solve(seizure_graph(), cfg.cluster(n))
        worst = max(worst, time.perf_counter() - t0)
    detail(f"oracle mismatches {mismatches}/200; reduced vs full mismatches {red_full}/9; "
           f"slowest reduced solve up to 64 nodes {worst * 1000:.1f} ms")
    assert mismatches == 0 and red_full == 0 and worst < 0.1


def test_ac5_power_latency_safety(detail):
    violations, schedules, worst_lat, worst_mw = 0, 0, 0.0, 0.0
    for scenario, opts in (("seizure-propagation", {}), ("movement-intent", {"models": 10}),
                           ("spike-sort", {"duration": 3000})):
        spec = ExperimentSpec.from_dict({"scenario": scenario, "options": opts})
        rows, _ = run_points(spec)
        for r in rows:
            assert r["status"] == "ok", r
            schedules += 1
            violations += (not r["valid"]) + bool(r.get("deadline_missed"))
            worst_mw = max(worst_mw, r["peak_mw"])
            if r.get("latency_ms") is not None:
                worst_lat = max(worst_lat, r["latency_ms"])
    detail(f"{schedules} accepted schedules, {violations} violations; peak draw {worst_mw:.3f} mW; "
           f"worst confirmed response {worst_lat:.3f} ms")
    assert violations == 0 and worst_mw <= 15.0 and worst_lat <= 10.0


def test_ac6_throughput_shape(detail):
    spec = ExperimentSpec.from_dict({"scenario": "throughput-sweep"})
    rows, _ = run_points(spec)
    s = summarize(spec, rows)
    detail(f"peak {s['peak_mbps']:.2f} Mbps at N={s['peak_nodes']}; raw-DTW all-to-all limit "
           f"{s['raw_dtw_channels']} of 96 channels ({s['raw_dtw_channels_framed']} with framing)")
    assert 8 <= s["peak_nodes"] <= 13 and s["peak_mbps"] >= 400
    assert 14 <= s["raw_dtw_channels"] <= 16


def test_ac7_movement_identity_and_scaling(detail):
    rng = np.random.default_rng(707)
    mismatches = 0
    for _ in range(10_000):
        sizes = rng.integers(1, 10, size=int(rng.integers(1, 7))).tolist()
        F = sum(sizes)
        model = SvmModel.split(rng.normal(size=F) * rng.choice([1e-3, 1.0, 1e3]), float(rng.normal()), sizes)
        x = rng.normal(size=F) * 100
        xq = [int(round(float(v) * 4096)) for v in x]
        central = sum(int(w) * q for w, q in zip(model.weights, xq)) + model.bias
        mismatches += hierarchical_decision(model, {n: x[a:b] for n, a, b in model.layout}) != central
    spec = ExperimentSpec.from_dict({"scenario": "movement-intent", "options": {"models": 10}})
    rows, _ = run_points(spec)
    rates = [r["intents_per_s"] for r in sorted(rows, key=lambda r: r["nodes"])]
    monotone = all(b > a for a, b in zip(rates, rates[1:]))
    detail(f"hierarchical != centralized on {mismatches}/10000 models; intents/s N=2..12 "
           f"{rates[0]:.0f}..{rates[-1]:.0f}, monotone={monotone}")
    assert mismatches == 0 and monotone and len(rates) == 11


def test_ac8_ber_study(detail):
    n = 10_000
    r = frame_error_rate(1e-4, 256, n, seed=8)
    p = expected_frame_error(1e-4, 2196)
    sigma = math.sqrt(p * (1 - p) / n)
    stab = {ber: degraded_confirm_stability(ber, 2000, seed=8) for ber in (1e-6, 1e-5, 1e-4)}
    worst = min(s["verdict_unchanged"] for s in stab.values())
    detail(f"frame error {r['frame_error']:.4f} vs {p:.4f} ({abs(r['frame_error'] - p) / sigma:.2f} sigma); "
           f"verdicts unchanged >= {worst:.4f} at ber <= 1e-4")
    assert r["bits"] == 2196
    assert abs(r["frame_error"] - p) <= 3 * sigma
    assert worst >= 0.99
    assert all(s["matched_clean_confirmed"] == 1.0 and s["unmatched_clean_confirmed"] == 0.0 for s in stab.values())


def test_ac9_query_engine(detail):
    cl, truth = burst_recording(3, 4, 6.0, seed=0)
    text = ("from * select data[:][t-100:t+100] where seizure_detect(data[t-120:t]) "
            "and t >= -5000 and t <= 0")
    res = run_query(text, cl)
    nodes = {r.node for r in res.records}
    lo = min((r.start_ms for r in res.records), default=math.nan)
    hi = max((r.stop_ms for r in res.records), default=math.nan)
    found = nodes == {truth["node"]} and lo <= truth["start_ms"] and hi >= truth["stop_ms"]
    bench = query_cluster(11, 96, seed=0, selectivity=0.01)[0]
    q3 = run_query(canned("Q3"), bench).metrics
    qps = {q: run_query(canned(q), bench).metrics["qps"] for q in ("Q1", "Q2")}
    detail(f"example query -> node(s) {sorted(nodes)} {lo:.0f}..{hi:.0f} ms (truth {truth['start_ms']:.0f}.."
           f"{truth['stop_ms']:.0f}); Q3 {q3['result_bytes'] / 1e6:.2f} MB in {q3['latency_ms']:.1f} ms; "
           f"Q1 {qps['Q1']:.1f} QPS, Q2 {qps['Q2']:.1f} QPS")
    assert found
    assert abs(q3["latency_ms"] - 1210) <= 121
    assert min(qps.values()) >= 10.0


def test_ac10_clock_sync(detail):
    rng = np.random.default_rng(1010)
    worst_res, worst_rounds, failures = 0.0, 0, 0
    reserved = True
    for trial in range(200):
        offs = {0: 0.0, **{i: float(rng.uniform(-1000, 1000)) for i in range(1, 11)}}
        net = Network(range(11))
        st = sntp_sync(offs, seed=trial, network=net)
        reserved &= (not net.is_available(0.0)) and net.trace[-1]["event"] == "network_unavailable"
        for n, s in st.items():
            failures += not s.converged
            worst_res = max(worst_res, abs(s.offset_us))
            worst_rounds = max(worst_rounds, s.rounds)
    detail(f"200 clusters with offsets up to 1 ms: worst residual {worst_res:.2f} us, at most {worst_rounds} rounds, "
           f"{failures} failures; network reserved during sync={reserved}")
    assert failures == 0 and worst_res <= 2.0 and worst_rounds <= 4 and reserved
