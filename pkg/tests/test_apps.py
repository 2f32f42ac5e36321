import numpy as np
import pytest
from hypothesis import given, strategies as st

from bcisim.apps import (PeerVerdict, SvmModel, detect_peaks, dtw_confirms, hierarchical_decision,
                         intents_per_second, movement_intent, neo, seizure_detect)
from bcisim.config import ExperimentSpec
from bcisim.errors import ConfigurationError
from bcisim.experiments import run_points, spike_accuracy, summarize
from bcisim.network import BerModel, Network
from bcisim.node import Node


def centralized_value(weights_q, bias_q, x, frac_bits=12):
    """Plain-integer reference: quantize every feature and take one dot product."""
    xq = [int(round(float(v) * (1 << frac_bits))) for v in x]
    return sum(int(w) * q for w, q in zip(weights_q, xq)) + int(bias_q)


def test_hierarchical_equals_centralized_on_10k_models():
    rng = np.random.default_rng(2024)
    mismatches = 0
    for _ in range(10_000):
        sizes = rng.integers(1, 10, size=int(rng.integers(1, 7))).tolist()
        F = sum(sizes)
        model = SvmModel.split(rng.normal(size=F) * rng.choice([1e-3, 1.0, 1e3]), float(rng.normal()), sizes)
        x = rng.normal(size=F) * 100
        blocks = {n: x[a:b] for n, a, b in model.layout}
        h = hierarchical_decision(model, blocks)
        mismatches += h != centralized_value(model.weights, model.bias, x)
        mismatches += (h > 0) != model.decide(x)
    assert mismatches == 0


@given(st.lists(st.integers(-2 ** 20, 2 ** 20), min_size=2, max_size=40), st.integers(-2 ** 30, 2 ** 30),
       st.data())
def test_partials_sum_exactly(weights, bias, data):
    F = len(weights)
    cuts = sorted(data.draw(st.sets(st.integers(1, F - 1), max_size=min(5, F - 1))))
    bounds = [0, *cuts, F]
    layout = tuple((i, a, b) for i, (a, b) in enumerate(zip(bounds, bounds[1:])))
    model = SvmModel(np.array(weights), bias, layout=layout)
    x = np.array(data.draw(st.lists(st.integers(-2 ** 15, 2 ** 15), min_size=F, max_size=F)), dtype=np.int64)
    blocks = {n: x[a:b] for n, a, b in layout}
    assert hierarchical_decision(model, blocks) == sum(w * v for w, v in zip(weights, x.tolist())) + bias


def test_layout_must_partition_features():
    with pytest.raises(ConfigurationError):
        SvmModel(np.ones(4), 0, layout=((0, 0, 2), (1, 3, 4)))


def test_intent_over_radio_and_feedback():
    model = SvmModel.split([1.0, -2.0, 0.5, 0.25], 0.1, [2, 2])
    blocks = {0: np.array([3.0, 1.0]), 1: np.array([2.0, 4.0])}
    nodes = {0: Node(0), 1: Node(1)}
    from bcisim.config import ClusterConfig
    from bcisim.scheduler import movement_graph, solve
    cl = ClusterConfig.default().cluster(2)
    sched = solve(movement_graph(), cl)
    res = movement_intent(model, blocks, network=Network([0, 1]), schedule=sched, nodes=nodes)
    assert res.intent == (1 if model.decide(np.concatenate([blocks[0], blocks[1]])) else -1)
    assert res.feedback_nodes == [0, 1] and all(len(n.stims) == 1 for n in nodes.values())


def test_lost_partial_skips_decision():
    model = SvmModel.split([1.0, 1.0], 0.0, [1, 1])
    from bcisim.config import ClusterConfig
    from bcisim.scheduler import movement_graph, solve
    sched = solve(movement_graph(), ClusterConfig.default().cluster(2))
    counters = {}
    res = movement_intent(model, {0: np.array([1.0]), 1: np.array([1.0])},
                          network=Network([0, 1], ber=BerModel(0.2, seed=3)), schedule=sched, counters=counters)
    assert res.intent is None and res.missing == [1] and counters == {"skipped": 1}


def test_intents_per_second_monotone_across_cluster_sizes():
    spec = ExperimentSpec.from_dict({"scenario": "movement-intent", "options": {"models": 100}})
    rows, _ = run_points(spec)
    rates = [r["intents_per_s"] for r in sorted(rows, key=lambda r: r["nodes"])]
    assert len(rates) == 11
    assert all(b > a for a, b in zip(rates, rates[1:]))
    assert all(r["valid"] for r in rows)
    assert intents_per_second([96], 96, 4.0) == 250.0


def test_seizure_detect_emits_event():
    model = SvmModel.from_float([1.0, 1.0], -1.0)
    ok, ev = seizure_detect([1.0, 0.5], model, node_id=2, electrodes=[3], window_start=240)
    assert ok and ev.node_id == 2 and ev.window_start == 240
    assert seizure_detect([0.2, 0.2], model) == (False, None)


def test_propagation_confirms_matches_and_filters_false_positives():
    spec = ExperimentSpec.from_dict({"scenario": "seizure-propagation"})
    rows, _ = run_points(spec)
    s = summarize(spec, rows)
    assert s["deadline_misses"] == 0 and s["invalid_schedules"] == 0
    assert s["max_latency_ms"] <= 10.0
    for r in rows:
        # node 1 carries the same burst as node 0; node 2 only noise
        assert r["verdicts"]["1"] in (PeerVerdict.CONFIRMED, PeerVerdict.REJECTED, PeerVerdict.NO_COLLISION)
        assert r["verdicts"]["2"] != PeerVerdict.CONFIRMED
    assert s["verdicts"].get(PeerVerdict.CONFIRMED, 0) > 0


def test_dtw_confirmation_rule():
    rng = np.random.default_rng(5)
    x = (rng.normal(size=120) * 2000).astype(np.int64)
    assert dtw_confirms(x, x)
    assert dtw_confirms(x, np.roll(x, 2), radius=12)
    assert not dtw_confirms(x, (rng.normal(size=120) * 2000).astype(np.int64))


def test_neo_and_peaks():
    x = np.zeros(200, dtype=np.int64)
    x[50], x[150] = 100, 80
    e = neo(x)
    assert e[50] == 10_000 and e[0] == 0 and e[-1] == 0
    assert detect_peaks(x, 1000) == [50, 150]
    assert detect_peaks(x, 1000, refractory=200) == [50]


@pytest.mark.parametrize("seed", [1, 2])
def test_spike_sort_accuracy_on_synthetic_ground_truth(seed):
    assert spike_accuracy(seed)["accuracy"] >= 0.8
