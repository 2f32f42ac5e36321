import pytest

from bcisim.errors import ConfigurationError
from bcisim.node import Fragment, Node, configure_pipeline


def test_one_ms_pulse_charges_dac_energy():
    n = Node(0)
    n.stimulate(0.0, 1000.0)
    assert n.dac_energy_uj() == pytest.approx(0.6)
    assert n.events[-1]["event"] == "stimulate" and n.events[-1]["t_us"] == 0.0


def test_zero_length_pattern_rejected():
    with pytest.raises(ValueError):
        Node(0).stimulate(10.0, 0.0)


def test_overlapping_requests_merge():
    n = Node(0)
    n.stimulate(0.0, 1000.0)
    n.stimulate(500.0, 1000.0)
    assert len(n.stims) == 1
    assert (n.stims[0].start_us, n.stims[0].end_us) == (0.0, 1500.0)
    n.stimulate(5000.0, 100.0)
    assert len(n.stims) == 2
    assert n.dac_energy_uj() == pytest.approx(1.6 * 0.6)


def test_seizure_fragment_wires_four_pes():
    n = Node(0)
    g = configure_pipeline(n, Fragment.fan_in(["XCOR", "BBF", "FFT"], "SVM", channels=8))
    assert set(g.nodes) == {"XCOR", "BBF", "FFT", "SVM"}
    assert g.order()[-1] == "SVM"


def test_empty_fragment_is_idle():
    n = Node(0)
    assert len(configure_pipeline(n, Fragment())) == 0
    assert len(configure_pipeline(n, None)) == 0
    assert n.power_tally()["pe_dynamic"] == 0.0


def test_half_capacity_selects_divider_two():
    n = Node(0)
    g = configure_pipeline(n, Fragment.linear(["FFT"], channels=48))
    assert g.nodes["FFT"].divider.k == 2
    g = configure_pipeline(n, Fragment.linear(["FFT"], channels=49))
    assert g.nodes["FFT"].divider.k == 1


def test_capacity_and_catalog_errors():
    n = Node(0)
    with pytest.raises(ConfigurationError):
        configure_pipeline(n, Fragment.linear(["FFT"], channels=97))
    with pytest.raises(ConfigurationError):
        configure_pipeline(n, Fragment.linear(["FFT"], channels=60), dividers={"FFT": 2})
    with pytest.raises(ConfigurationError):
        configure_pipeline(n, Fragment.linear(["NOPE"], channels=1))
    with pytest.raises(ConfigurationError):
        configure_pipeline(n, Fragment(edges=[("FFT", "SVM"), ("SVM", "FFT")]))


def test_power_tally_is_sum_of_components():
    n = Node(0)
    configure_pipeline(n, Fragment.fan_in(["XCOR", "BBF", "FFT"], "SVM", channels=96))
    t = n.power_tally(radio="intra", stimulating=True)
    parts = {k: v for k, v in t.items() if k != "total"}
    assert t["total"] == pytest.approx(sum(parts.values()))
    assert t["adc"] == pytest.approx(2.88)
    assert t["radio"] == pytest.approx(1.721) and t["dac"] == pytest.approx(0.6)
    leak = sum(n.catalog[p].leakage for p in n.fabricated) / 1000.0
    assert t["pe_leakage"] == pytest.approx(leak)
    dyn = sum(n.catalog[p].dyn_per_electrode * 96 for p in ("XCOR", "BBF", "FFT", "SVM")) / 1000.0
    assert t["pe_dynamic"] == pytest.approx(dyn)
    assert t["total"] > n.power_tally()["total"]


def test_event_log_is_jsonl(tmp_path):
    import json
    n = Node(3)
    n.stimulate(0.0, 10.0)
    p = tmp_path / "ev.jsonl"
    n.write_event_log(p)
    recs = [json.loads(line) for line in p.read_text().splitlines()]
    assert recs == [{"node": 3, "event": "stimulate", "t_us": 0.0, "duration_us": 10.0, "pattern": "default"}]
