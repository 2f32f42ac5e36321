"""How aggregate hash-comparison throughput scales with cluster size.

Each added implant contributes channels, but every node's hashes have to
cross the shared radio in its own TDMA slot. The sweep solves the
scheduler at each size and prints where the two effects balance. It then
shows how few raw channels two nodes could compare exactly over the same
radio.
"""
from bcisim.config import ClusterConfig
from bcisim.experiments import CHANNEL_MBPS, raw_dtw_channel_limit
from bcisim.scheduler import hash_throughput_graph, reduced_solve, validate_schedule


def main():
    cfg = ClusterConfig.default()
    print(" N  channels  Mbps    radio busy")
    best = (0, 0.0)
    for n in range(2, 15):
        cl = cfg.cluster(n)
        sched = reduced_solve(hash_throughput_graph(), cl)
        rep = validate_schedule(sched, cl)
        ch = sched.channels_of("compare")
        mbps = ch * CHANNEL_MBPS
        best = max(best, (mbps, n))
        print(f"{n:2d}  {ch:8d}  {mbps:6.1f}  {rep.radio_busy_us / sched.epoch_us:6.1%}")
    print(f"peak: {best[0]:.1f} Mbps with {best[1]} nodes")
    print(f"raw samples, all-to-all exact DTW: {raw_dtw_channel_limit(cfg)} of 96 channels fit the radio "
          f"({raw_dtw_channel_limit(cfg, framing=True)} once frame headers are charged)")


if __name__ == "__main__":
    main()
