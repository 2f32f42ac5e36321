import json
import time

import numpy as np
import pytest

from bcisim.config import ClusterConfig
from bcisim.errors import ConfigurationError, InfeasibleError, ScheduleViolation
from bcisim.experiments import random_instance
from bcisim.scheduler import (GRAPHS, Cluster, Schedule, TaskGraph, exhaustive_solve, hash_throughput_graph,
                              movement_graph, reduced_solve, seizure_graph, simple_instance, solve, solve_instance,
                              spike_sort_graph, validate_schedule)
from oracles.brute_ilp import best_value


def _matrices(inst):
    A, b = inst.matrix()
    return A, b


def test_bnb_matches_brute_force_on_200_random_instances():
    rng = np.random.default_rng(4242)
    mismatches = 0
    for _ in range(200):
        inst = random_instance(rng, z_max=50)
        A, b = _matrices(inst)
        want = best_value(inst.weights, A, b, inst.ub)
        got = solve_instance(inst)
        assert inst.feasible(got.x)
        mismatches += abs(got.objective - want) > 1e-9
    assert mismatches == 0


def test_exhaustive_solver_agrees_with_oracle():
    rng = np.random.default_rng(7)
    for _ in range(30):
        inst = random_instance(rng, z_max=12)
        A, b = _matrices(inst)
        assert exhaustive_solve(inst).objective == pytest.approx(best_value(inst.weights, A, b, inst.ub))


def test_known_small_instance():
    # maximize 3a + 2b  s.t. a + b <= 4, a <= 3  -> a=3, b=1 -> 11
    inst = simple_instance([3, 2], [[1, 1], [1, 0]], [4, 3], [10, 10])
    sol = solve_instance(inst)
    assert sol.objective == 11 and list(sol.x) == [3, 1]


def test_infeasible_names_a_row():
    inst = simple_instance([1], [[-1]], [-5], [3])
    with pytest.raises(InfeasibleError) as exc:
        solve_instance(inst)
    assert exc.value.row == "r0"


@pytest.mark.parametrize("graph", [seizure_graph, hash_throughput_graph, spike_sort_graph])
@pytest.mark.parametrize("n", [2, 4])
def test_reduced_equals_full_on_symmetric_instances(graph, n):
    cl = ClusterConfig.default().cluster(n)
    assert reduced_solve(graph(), cl).objective == pytest.approx(solve(graph(), cl).objective)


def test_reduced_solve_fast_at_64_nodes():
    cl = ClusterConfig.default().cluster(64)
    reduced_solve(seizure_graph(), cl)       # warm imports and caches
    t0 = time.perf_counter()
    sched = reduced_solve(seizure_graph(), cl)
    assert time.perf_counter() - t0 < 0.1
    assert sched.n_nodes == 64


def test_reduced_rejects_heterogeneous_budgets():
    cl = Cluster(3, [15.0, 15.0, 12.0])
    with pytest.raises(ConfigurationError):
        reduced_solve(seizure_graph(), cl)
    with pytest.raises(ConfigurationError):
        reduced_solve(movement_graph(), ClusterConfig.default().cluster(3))


@pytest.mark.parametrize("name,n", [("seizure", 2), ("seizure", 4), ("seizure", 8), ("movement", 4),
                                    ("movement", 11), ("spike-sort", 4), ("hash-throughput", 11)])
def test_accepted_schedules_pass_replay(name, n):
    cl = ClusterConfig.default().cluster(n)
    graph = GRAPHS[name]()
    sched = solve(graph, cl) if name == "movement" else reduced_solve(graph, cl)
    rep = validate_schedule(sched, cl)
    assert rep.ok, rep.violations
    assert max(rep.peak_mw.values()) <= 15.0 + 1e-9
    assert all(v <= graph.deadline_ms + 1e-9 for v in rep.latency_ms.values())


def test_tampered_schedule_is_rejected():
    cl = ClusterConfig.default().cluster(2)
    sched = reduced_solve(seizure_graph(), cl)
    sched.budgets_mw = [5.0, 5.0]
    with pytest.raises(ScheduleViolation) as exc:
        validate_schedule(sched, Cluster(2, [5.0, 5.0]))
    assert exc.value.constraint.startswith("power")


def test_tight_budget_is_infeasible():
    with pytest.raises(InfeasibleError):
        solve(seizure_graph(), Cluster(2, [3.0, 3.0]))


def test_schedule_json_roundtrip(tmp_path):
    cl = ClusterConfig.default().cluster(4)
    sched = reduced_solve(seizure_graph(), cl)
    p = tmp_path / "s.json"
    sched.save(p)
    back = Schedule.load(p)
    assert back.to_dict() == json.loads(sched.dumps())
    assert validate_schedule(back, cl).ok


def test_taskgraph_text_roundtrip():
    for make in GRAPHS.values():
        g = make()
        assert TaskGraph.load(g.dump()).to_dict() == g.to_dict()


def test_throughput_peaks_mid_cluster():
    cfg = ClusterConfig.default()
    mbps = {n: reduced_solve(hash_throughput_graph(), cfg.cluster(n)).channels_of("compare") * 0.48
            for n in range(2, 15)}
    peak = max(mbps, key=mbps.get)
    assert 8 <= peak <= 13 and mbps[peak] >= 400
