"""Scenario runners behind ``bcisim run``.

Every scenario expands its sweep axes into points, runs each point once
per seed, and returns plain dictionaries. :func:`run` writes them as
line-delimited JSON next to a summary document. Wall-clock timings go to a
separate file so that the metrics file of a given spec and seed is
byte-identical across runs.
"""
from __future__ import annotations

import itertools
import json
import time
from collections import Counter
from pathlib import Path
from typing import Any, Callable

import numpy as np

from .apps import (SeizureCluster, SeizureEvent, PropagationConfig, SvmModel, TemplateBank, dtw_confirms,
                   hierarchical_decision, intents_per_second, neo, spike_sort)
from .config import ClusterConfig, ExperimentSpec
from .errors import BciSimError, InfeasibleError, ScheduleViolation
from .network import BerModel, Network, expected_frame_error
from .packet import PacketType, frame_bits, npack, parse_frame
from .query import QueryCluster, canned, run_query
from .scheduler import (exhaustive_solve, hash_throughput_graph, movement_graph, raw_dtw_graph, reduced_solve,
                        seizure_graph, simple_instance, solve, solve_instance, spike_sort_graph, validate_schedule)
from .signal import ArrayConfig, spike_templates, synth_generate

CHANNEL_MBPS = 30_000 * 16 / 1e6


def _points(sweep: dict[str, list], defaults: dict[str, list]) -> list[dict]:
    axes = {**defaults, **sweep}
    keys = list(axes)
    return [dict(zip(keys, vals)) for vals in itertools.product(*(axes[k] for k in keys))]


def _schedule_check(sched, cluster) -> dict:
    rep = validate_schedule(sched, cluster, strict=False)
    return {"valid": rep.ok, "peak_mw": round(max(rep.peak_mw.values()), 6),
            "violations": [c for c, _ in rep.violations]}


# --------------------------------------------------------------------------
# throughput


def raw_dtw_channel_limit(cfg: ClusterConfig | None = None, framing: bool = False) -> int:
    """Channels two nodes can exchange raw for all-to-all exact comparison.

    With ``framing`` off only sample payload occupies the radio, which is
    the link-budget view; with it on, frame headers and CRCs are charged too.
    """
    cfg = cfg or ClusterConfig.default()
    cl = cfg.cluster(2)
    cl.framing = framing
    sched = solve(raw_dtw_graph(), cl)
    return sched.channels_of("rawdtw")


def throughput_sweep(spec: ExperimentSpec, point: dict, seed: int, timing: dict) -> list[dict]:
    n = int(point["nodes"])
    cl = spec.config.cluster(n)
    t0 = time.perf_counter()
    try:
        sched = reduced_solve(hash_throughput_graph(budget_mw=cl.budgets_mw[0]), cl)
    except InfeasibleError as exc:
        return [{"status": "infeasible", "reason": str(exc)}]
    timing["solve_s"] = time.perf_counter() - t0
    ch = sched.channels_of("compare")
    return [{"status": "ok", "channels": ch, "channels_per_node": ch // n,
             "throughput_mbps": round(ch * CHANNEL_MBPS, 6), **_schedule_check(sched, cl)}]


def _throughput_summary(spec, rows):
    ok = [r for r in rows if r["status"] == "ok"]
    best = max(ok, key=lambda r: r["throughput_mbps"], default=None)
    return {"peak_nodes": best and best["nodes"], "peak_mbps": best and best["throughput_mbps"],
            "raw_dtw_channels": raw_dtw_channel_limit(spec.config, framing=False),
            "raw_dtw_channels_framed": raw_dtw_channel_limit(spec.config, framing=True)}


# --------------------------------------------------------------------------
# bit errors


def frame_error_rate(ber: float, payload_len: int, trials: int, seed: int, ptype=PacketType.SIGNAL
                     ) -> dict[str, float]:
    """Monte Carlo frame outcomes for one frame size at one bit error rate."""
    frame = npack(bytes(range(256))[:payload_len] or b"\0", ptype, 1, 255)
    bits = frame_bits(payload_len)
    model = BerModel(ber, seed=seed)
    bad = degraded = 0
    for _ in range(trials):
        got, k = model.corrupt(frame, bits)
        if k == 0:
            continue
        r = parse_frame(got)
        if not (r.header_ok and r.payload_ok):
            bad += 1
            degraded += r.header_ok
    return {"frame_error": bad / trials, "expected": expected_frame_error(ber, bits),
            "header_intact_share": degraded / bad if bad else 0.0, "bits": bits}


def degraded_confirm_stability(ber: float, trials: int, seed: int, window: int = 120,
                               config: PropagationConfig | None = None) -> dict[str, float]:
    """How often a DTW verdict on a signal window survives the channel.

    A matched pair (same burst, shifted slightly, independent noise) and an
    unmatched pair (burst against noise) are judged once on clean samples
    and again after the received window crossed the channel as a signal
    frame; a damaged payload is still delivered to DTW.
    """
    config = config or PropagationConfig()
    cfg = ArrayConfig(electrodes=1)
    a = synth_generate("seizure-burst", seed, cfg, 4 * window, burst_start=0, burst_length=4 * window)
    b = synth_generate("seizure-burst", seed + 1, cfg, 4 * window, burst_start=2, burst_length=4 * window)
    z = synth_generate("noise", seed + 2, cfg, 4 * window)
    model = BerModel(ber, seed=seed)
    delivered = degraded = changed = pos_base = neg_base = 0
    for i in range(trials):
        off = (i * 37) % (3 * window)
        sent = a.chunks[0].samples[off:off + window].astype(">i2")
        frame = npack(sent.tobytes(), PacketType.SIGNAL, 0, 255)
        got, _ = model.corrupt(frame, frame_bits(len(sent.tobytes())))
        r = parse_frame(got)
        clean = sent.astype(np.int64)
        pos_ref = b.chunks[0].samples[off:off + window]
        neg_ref = z.chunks[0].samples[off:off + window]
        pos_clean = dtw_confirms(clean, pos_ref, config.dtw_radius, config.dtw_threshold)
        neg_clean = dtw_confirms(clean, neg_ref, config.dtw_radius, config.dtw_threshold)
        pos_base += pos_clean
        neg_base += neg_clean
        if not r.header_ok:
            continue            # dropped: no verdict is formed from this frame
        delivered += 1
        degraded += not r.payload_ok
        recv = np.frombuffer(r.packet.payload, dtype=">i2").astype(np.int64)
        pos = dtw_confirms(recv, pos_ref, config.dtw_radius, config.dtw_threshold)
        neg = dtw_confirms(recv, neg_ref, config.dtw_radius, config.dtw_threshold)
        changed += (pos != pos_clean) or (neg != neg_clean)
    return {"delivered": delivered / trials, "degraded": degraded / trials,
            "verdict_unchanged": 1.0 - changed / delivered if delivered else None,
            "matched_clean_confirmed": pos_base / trials, "unmatched_clean_confirmed": neg_base / trials}


def ber_sweep(spec: ExperimentSpec, point: dict, seed: int, timing: dict) -> list[dict]:
    ber = float(point["ber"])
    trials = int(spec.options.get("trials", 2000))
    hash_len = int(spec.options.get("hash_payload", 16))
    out = []
    for kind, L, pt in (("hash", hash_len, PacketType.HASH), ("signal", 256, PacketType.SIGNAL)):
        out.append({"frame": kind, "payload_bytes": L, **frame_error_rate(ber, L, trials, seed, pt)})
    vt = int(spec.options.get("verdict_trials", 200))
    if vt:
        out.append({"frame": "signal-verdict", **degraded_confirm_stability(ber, vt, seed)})
    return out


# --------------------------------------------------------------------------
# solver benchmark


def random_instance(rng: np.random.Generator, n_flows: int | None = None, z_max: int = 50):
    """Small packing ILP with nonnegative rows, the shape the scheduler produces."""
    n = int(n_flows or rng.integers(1, 5))
    m = int(rng.integers(1, 4))
    w = rng.integers(1, 6, size=n).astype(float)
    A = rng.integers(0, 8, size=(m, n)).astype(float)
    ub = rng.integers(0, z_max + 1, size=n)
    b = np.array([rng.integers(0, int(A[i] @ ub) + 2) for i in range(m)], dtype=float)
    return simple_instance(w, A, b, ub)


def ilp_bench(spec: ExperimentSpec, point: dict, seed: int, timing: dict) -> list[dict]:
    n = int(point["nodes"])
    graph = {"seizure": seizure_graph, "hash-throughput": hash_throughput_graph, "movement": movement_graph,
             "spike-sort": spike_sort_graph}[spec.options.get("graph", "seizure")]()
    cl = spec.config.cluster(n)
    t0 = time.perf_counter()
    try:
        red = reduced_solve(graph, cl)
    except InfeasibleError as exc:
        return [{"status": "infeasible", "reason": str(exc)}]
    timing["reduced_s"] = time.perf_counter() - t0
    row: dict[str, Any] = {"status": "ok", "objective_reduced": red.objective, "z": red.z}
    if n <= int(spec.options.get("full_max_nodes", 8)):
        t0 = time.perf_counter()
        full = solve(graph, cl)
        timing["full_s"] = time.perf_counter() - t0
        row.update(objective_full=full.objective, match=abs(full.objective - red.objective) < 1e-6)
    return [row]


def _ilp_summary(spec, rows):
    rng = np.random.default_rng(spec.seeds[0])
    k = int(spec.options.get("random_instances", 50))
    mismatches = 0
    for _ in range(k):
        inst = random_instance(rng)
        a, b = solve_instance(inst), exhaustive_solve(inst)
        mismatches += abs(a.objective - b.objective) > 1e-9
    return {"random_instances": k, "oracle_mismatches": mismatches,
            "reduced_full_mismatches": sum(1 for r in rows if r.get("match") is False)}


# --------------------------------------------------------------------------
# applications


def _burst_signals(n: int, electrodes: int, duration: int, seed: int) -> dict[int, np.ndarray]:
    """Node 0 and 1 see the same burst 30 samples apart; the rest see noise."""
    cfg = ArrayConfig(electrodes=electrodes)
    half = duration // 3

    def arr(s):
        return np.stack([c.samples for c in s.chunks])
    sig = {0: arr(synth_generate("seizure-burst", seed * 10 + 1, cfg, duration, burst_start=half, burst_length=half)),
           1: arr(synth_generate("seizure-burst", seed * 10 + 2, cfg, duration, burst_start=half + 30,
                                 burst_length=half))}
    for k in range(2, n):
        sig[k] = arr(synth_generate("noise", seed * 10 + k + 1, cfg, duration))
    return sig


def seizure_propagation(spec: ExperimentSpec, point: dict, seed: int, timing: dict) -> list[dict]:
    n = int(point["nodes"])
    ber = float(point.get("ber", 0.0))
    E = int(spec.options.get("electrodes", 8))
    duration = 9000
    app = spec.config.app("seizure")
    cl = spec.config.cluster(n)
    try:
        sched = solve(seizure_graph(weights=tuple(app.get("weights", (1.0, 2.0, 4.0)))), cl)
    except InfeasibleError as exc:
        return [{"status": "infeasible", "reason": str(exc)}]
    check = _schedule_check(sched, cl)
    pc = PropagationConfig(window=int(app.get("window", 120)), hash_step=int(app.get("hash_step", 60)),
                           history_ms=float(app.get("history_ms", 100)), dtw_radius=int(app.get("dtw_radius", 12)),
                           dtw_threshold=float(app.get("dtw_threshold", 800.0)),
                           stim_duration_us=float(app.get("stim_duration_us", 1000)))
    net = Network(range(n), cl.radio, BerModel(ber, seed=seed))
    sc = SeizureCluster(_burst_signals(n, E, duration, seed), sched, net, pc)
    out = []
    for ws in range(duration // 3 + 600, 2 * duration // 3, 600):
        r = sc.propagation_step(SeizureEvent(0, tuple(range(E)), ws))
        out.append({"status": "ok", "window_start": ws, "verdicts": {str(k): v for k, v in r.verdicts.items()},
                    "raw_broadcast": r.raw_broadcast, "latency_ms": r.latency_ms,
                    "deadline_missed": r.deadline_missed, **check})
    return out


def movement_models_identical(n_models: int, seed: int, n_nodes: int = 4) -> int:
    """Count models whose hierarchical decision differs from the centralized one."""
    rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(n_models):
        sizes = rng.integers(1, 12, size=n_nodes).tolist()
        F = sum(sizes)
        model = SvmModel.split(rng.normal(size=F) * rng.choice([1e-3, 1.0, 1e3]), float(rng.normal()), sizes)
        x = rng.normal(size=F) * 100
        blocks = {nd: x[a:b] for nd, a, b in model.layout}
        hv, central = hierarchical_decision(model, blocks), model.decision_value(x)
        bad += hv != central
    return bad


def movement_intent(spec: ExperimentSpec, point: dict, seed: int, timing: dict) -> list[dict]:
    n = int(point["nodes"])
    cl = spec.config.cluster(n)
    app = spec.config.app("movement")
    try:
        sched = solve(movement_graph(leader=int(app.get("leader", 0))), cl)
    except InfeasibleError as exc:
        return [{"status": "infeasible", "reason": str(exc)}]
    ch = sched.channels_of("intent")
    return [{"status": "ok", "channels": ch,
             "intents_per_s": intents_per_second([ch], cl.array.electrodes, float(app.get("window_ms", 4.0))),
             **_schedule_check(sched, cl)}]


def _movement_summary(spec, rows):
    ok = sorted((r for r in rows if r["status"] == "ok"), key=lambda r: r["nodes"])
    rates = [r["intents_per_s"] for r in ok]
    k = int(spec.options.get("models", 1000))
    return {"monotone": all(b > a for a, b in zip(rates, rates[1:])), "models_checked": k,
            "hierarchical_mismatches": movement_models_identical(k, spec.seeds[0])}


def spike_accuracy(seed: int, electrodes: int = 4, duration: int = 30_000, tolerance: int = 6,
                   n_seeds: int = 16) -> dict[str, float]:
    cfg = ArrayConfig(electrodes=electrodes)
    ss = synth_generate("spike-train", seed, cfg, duration)
    bank = TemplateBank.build(ss.templates, seeds=range(n_seeds))
    total = detected = correct = 0
    for e in range(electrodes):
        x = ss.chunks[e].samples
        labels = spike_sort(x, bank, threshold=8 * float(np.median(np.abs(neo(x)))))
        for s in (s for s in ss.spikes if s.electrode_id == e):
            total += 1
            m = [lab for lab in labels if abs(lab.position - s.position) <= tolerance]
            if m:
                detected += 1
                correct += m[0].label == s.template
    return {"spikes": total, "detection": detected / total, "accuracy": correct / total}


def spike_sort_scenario(spec: ExperimentSpec, point: dict, seed: int, timing: dict) -> list[dict]:
    app = spec.config.app("spike_sort")
    cl = spec.config.cluster(int(point.get("nodes", 1)))
    sched = solve(spike_sort_graph(), cl)
    res = spike_accuracy(seed, int(spec.options.get("electrodes", 4)), int(spec.options.get("duration", 30_000)),
                         n_seeds=int(app.get("hash_seeds", 16)))
    return [{"status": "ok", **res, "channels_per_node": sched.channels_of("sort") // cl.n_nodes,
             **_schedule_check(sched, cl)}]


def _mean_summary(key):
    def f(spec, rows):
        vals = [r[key] for r in rows if key in r]
        return {f"mean_{key}": float(np.mean(vals)) if vals else None, f"min_{key}": min(vals, default=None)}
    return f


def _propagation_summary(spec, rows):
    ok = [r for r in rows if r["status"] == "ok"]
    lat = [r["latency_ms"] for r in ok if r["latency_ms"] is not None]
    verdicts = Counter(v for r in ok for v in r["verdicts"].values())
    return {"events": len(ok), "max_latency_ms": max(lat, default=None),
            "deadline_misses": sum(bool(r["deadline_missed"]) for r in ok),
            "invalid_schedules": sum(not r["valid"] for r in ok), "verdicts": dict(sorted(verdicts.items()))}


# --------------------------------------------------------------------------
# query benchmark


def query_cluster(n: int, electrodes: int, seed: int, selectivity: float = 0.01, history_ms: int = 100,
                  cfg: ClusterConfig | None = None) -> tuple[QueryCluster, int]:
    """Record noise on every node, plus seizure-like windows carrying one
    spike template at roughly ``selectivity`` of the query windows."""
    cfg = cfg or ClusterConfig.default()
    rng = np.random.default_rng(seed)
    tpl = spike_templates(3, 48, seed=seed)
    q = cfg.app("query")
    cl = QueryCluster(n, electrodes=electrodes, budgets_mw=[float(cfg.doc["cluster"]["budget_mw"])] * n,
                      templates=TemplateBank.build(tpl), neo_threshold=float(q.get("neo_threshold", 2e6)),
                      dtw_threshold=float(q.get("dtw_threshold", 400.0)))
    W = 120
    windows = history_ms * 30 // W
    T = (windows + 5) * W
    positives = 0
    tt = np.arange(W)
    burst = 3000 * np.sin(2 * np.pi * 400 * tt / 30000)
    for node in range(n):
        x = rng.normal(0, 200, size=(electrodes, T))
        for e in range(electrodes):
            for w in range(windows):
                if rng.random() < selectivity:
                    s = T - (w + 1) * W
                    positives += 1
                    x[e, s:s + W] += burst
                    x[e, s + 40:s + 88] += tpl[0]
        cl.record(node, np.clip(np.rint(x), -32768, 32767).astype(np.int16))
    return cl, positives


def query_bench(spec: ExperimentSpec, point: dict, seed: int, timing: dict) -> list[dict]:
    n = int(point["nodes"])
    cl, positives = query_cluster(n, int(spec.options.get("electrodes", 96)), seed, float(point["selectivity"]),
                                  cfg=spec.config)
    out = []
    for name in spec.options.get("queries", ["Q1", "Q2", "Q3"]):
        t0 = time.perf_counter()
        try:
            r = run_query(canned(name), cl)
        except BciSimError as exc:
            out.append({"query": name, "status": "infeasible", "reason": str(exc)})
            continue
        timing[name] = time.perf_counter() - t0
        out.append({"query": name, "status": "ok", "positives": positives,
                    **{k: (round(v, 6) if isinstance(v, float) else v) for k, v in r.metrics.items()}})
    return out


# --------------------------------------------------------------------------
# driver


SCENARIOS: dict[str, tuple[Callable, dict, Callable | None]] = {
    "throughput-sweep": (throughput_sweep, {"nodes": list(range(2, 15))}, _throughput_summary),
    "ber-sweep": (ber_sweep, {"ber": [1e-6, 1e-5, 1e-4, 1e-3, 1e-2]}, None),
    "ilp-bench": (ilp_bench, {"nodes": [2, 4, 8, 16, 32, 64]}, _ilp_summary),
    "query-bench": (query_bench, {"nodes": [11], "selectivity": [0.01]}, None),
    "seizure-propagation": (seizure_propagation, {"nodes": [3], "ber": [0.0]}, _propagation_summary),
    "movement-intent": (movement_intent, {"nodes": list(range(2, 13))}, _movement_summary),
    "spike-sort": (spike_sort_scenario, {"nodes": [1]}, _mean_summary("accuracy")),
}


def run_points(spec: ExperimentSpec) -> tuple[list[dict], list[dict]]:
    """All metric rows of ``spec`` and the matching wall-clock rows."""
    fn, defaults, _ = SCENARIOS[spec.scenario]
    rows, timings = [], []
    for point in _points(spec.sweep, defaults):
        for seed in spec.seeds:
            timing: dict[str, float] = {}
            try:
                results = fn(spec, point, seed, timing)
            except (InfeasibleError, ScheduleViolation) as exc:
                results = [{"status": "infeasible", "reason": str(exc)}]
            for res in results:
                rows.append({"scenario": spec.scenario, **point, "seed": seed, **res})
            timings.append({"scenario": spec.scenario, **point, "seed": seed,
                            **{k: round(v, 6) for k, v in timing.items()}})
    return rows, timings


def summarize(spec: ExperimentSpec, rows: list[dict]) -> dict:
    _, _, fn = SCENARIOS[spec.scenario]
    base = {"scenario": spec.scenario, "seeds": spec.seeds, "points": len(rows),
            "infeasible": sum(r.get("status") == "infeasible" for r in rows)}
    if fn is not None:
        base.update(fn(spec, rows))
    return base


def run(spec: ExperimentSpec, output: str | Path | None = None) -> dict:
    """Run ``spec`` and write ``<scenario>.jsonl``, ``<scenario>.summary.json``
    and ``<scenario>.timing.jsonl`` under the output directory."""
    out = Path(output or spec.output)
    out.mkdir(parents=True, exist_ok=True)
    rows, timings = run_points(spec)
    summary = summarize(spec, rows)
    with open(out / f"{spec.scenario}.jsonl", "w") as fh:
        for r in rows:
            fh.write(json.dumps(r, sort_keys=True, default=_jsonable) + "\n")
    with open(out / f"{spec.scenario}.timing.jsonl", "w") as fh:
        for r in timings:
            fh.write(json.dumps(r, sort_keys=True) + "\n")
    (out / f"{spec.scenario}.summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True,
                                                                  default=_jsonable) + "\n")
    return summary


def _jsonable(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, (np.bool_,)):
        return bool(v)
    raise TypeError(type(v).__name__)


def burst_recording(n: int, electrodes: int, seconds: float, seed: int = 0, burst_node: int = 1,
                    burst_ago_ms: float = 2000.0, burst_ms: float = 300.0,
                    cfg: ClusterConfig | None = None) -> tuple[QueryCluster, dict]:
    """Query cluster where ``burst_node`` recorded one seizure-like burst
    ``burst_ago_ms`` before now and every other node recorded noise.

    Returns the cluster and the ground truth as relative milliseconds.
    """
    cfg = cfg or ClusterConfig.default()
    rate = float(cfg.doc["cluster"]["sample_rate_hz"])
    T = int(seconds * rate)
    start = T - int(burst_ago_ms * rate / 1000)
    length = int(burst_ms * rate / 1000)
    cl = QueryCluster(n, electrodes=electrodes, sample_rate=rate,
                      budgets_mw=[float(cfg.doc["cluster"]["budget_mw"])] * n)
    arr = ArrayConfig(electrodes=electrodes, sample_rate=rate)
    for node in range(n):
        if node == burst_node:
            ss = synth_generate("seizure-burst", seed + node, arr, T, burst_start=start, burst_length=length)
        else:
            ss = synth_generate("noise", seed + node, arr, T)
        cl.record(node, np.stack([c.samples for c in ss.chunks]))
    truth = {"node": burst_node, "start_ms": -burst_ago_ms, "stop_ms": -burst_ago_ms + burst_ms}
    return cl, truth
