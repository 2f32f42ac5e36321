"""An interactive query session against recorded cluster data.

Three implants record six seconds of activity; node 1 saw a burst two
seconds ago. The session asks for seizure-positive windows, then shows
the cost of the three canned benchmark queries on a full-size cluster.
"""
from bcisim.experiments import burst_recording, query_cluster
from bcisim.query import QuerySession, canned, run_query

EXAMPLE = ("from * select data[:][t-100:t+100] where seizure_detect(data[t-120:t]) "
           "and t >= -5000 and t <= 0")


def main():
    cluster, truth = burst_recording(3, 4, 6.0, seed=0)
    print(f"injected burst: node {truth['node']}, {truth['start_ms']:.0f} to {truth['stop_ms']:.0f} ms")

    session = QuerySession(cluster)
    for line in (EXAMPLE, "from select", ":pause", ":resume"):
        _, out = session.handle(line)
        if line == EXAMPLE:
            res = run_query(EXAMPLE, cluster)
            spans = sorted({(r.node, r.start_ms, r.stop_ms) for r in res.records})
            print(f"> example query: {len(res.records)} records covering (node, start ms, stop ms) {spans}")
            print(f"  latency {res.metrics['latency_ms']:.2f} ms, energy {res.metrics['energy_uj']:.1f} uJ")
        else:
            print(f"> {line}\n  {out}")

    print("\nfull-size cluster, 11 nodes x 96 electrodes, 100 ms of history:")
    bench, _ = query_cluster(11, 96, seed=0, selectivity=0.01)
    for name in ("Q1", "Q2", "Q3"):
        m = run_query(canned(name), bench).metrics
        print(f"  {name}: {m['records']:5d} records, {m['result_bytes'] / 1e6:6.2f} MB, "
              f"latency {m['latency_ms']:8.1f} ms, {m['qps']:5.2f} queries/s")


if __name__ == "__main__":
    main()
