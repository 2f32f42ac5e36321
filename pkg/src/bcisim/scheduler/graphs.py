"""Task graphs of the applications the scheduler is exercised on.

Hash streams are far thinner than raw electrode streams. A window of 120
samples hashed every 60 samples (half overlap) yields five 8-bit hashes
per channel per 10 ms epoch, 40 bits against 4800 raw bits. That ratio is
the ``rate`` of every stage that handles hashes rather than samples.
"""
from __future__ import annotations

from .taskgraph import Edge, Stage, Task, TaskGraph

RAW_BITS_PER_EPOCH = 30_000 * 16 // 100        # one channel, 10 ms of 16-bit samples
HASH_BITS_PER_EPOCH = 5 * 8                    # 10 ms / 2 ms hop, 8-bit hashes
HASH_RATE = HASH_BITS_PER_EPOCH / RAW_BITS_PER_EPOCH
WINDOW_BITS = 120 * 16                         # one raw window sent for exact comparison
PARTIAL_BITS = 64                              # one int64 fixed-point partial classifier sum


def _hash_compare_task(name: str = "compare", weight: float = 1.0) -> Task:
    """Every node hashes its channels and broadcasts the hashes; every other
    node unpacks them, checks them against its own stored hashes, and
    replies one collision bit per channel."""
    r = HASH_RATE
    stages = [
        Stage("hconv", "HCONV", "any", critical=False, shared=True),
        Stage("ngram", "NGRAM", "with:hconv", critical=False, shared=True),
        Stage("hfreq", "HFREQ", "with:hconv", critical=False, shared=True),
        Stage("hcomp", "HCOMP", "with:hconv", critical=False, shared=True),
        Stage("npack", "NPACK", "with:hconv", rate=r, shared=True),
        Stage("unpack", "UNPACK", "not:hconv", rate=r),
        Stage("dcomp", "DCOMP", "with:unpack", rate=r),
        Stage("ccheck", "CCHECK", "with:unpack", rate=r),
        Stage("sc", "SC", "with:unpack", rate=r, reply_bits=1),
    ]
    edges = [Edge("hconv", "ngram"), Edge("ngram", "hfreq"), Edge("hfreq", "hcomp"), Edge("hcomp", "npack"),
             Edge("npack", "unpack", bits_per_channel=HASH_BITS_PER_EPOCH, broadcast=True),
             Edge("unpack", "dcomp"), Edge("dcomp", "ccheck"), Edge("ccheck", "sc")]
    return Task(name, weight, stages, edges, group_by="hconv")


def _detect_task(weight: float = 1.0) -> Task:
    stages = [Stage("bbf", "BBF"), Stage("fft", "FFT", "with:bbf"), Stage("xcor", "XCOR", "with:bbf"),
              Stage("svm", "SVM", "with:bbf")]
    edges = [Edge("bbf", "svm"), Edge("fft", "svm"), Edge("xcor", "svm")]
    return Task("detect", weight, stages, edges)


def hash_throughput_graph(deadline_ms: float = 10.0, budget_mw: float = 15.0) -> TaskGraph:
    """All-to-all hash comparison alone, as used for the throughput sweep."""
    return TaskGraph("hash-throughput", [_hash_compare_task()], deadline_ms, budget_mw)


def raw_dtw_graph(deadline_ms: float = 10.0, budget_mw: float = 15.0) -> TaskGraph:
    """All-to-all exchange of raw channels for exact comparison on every peer."""
    stages = [Stage("src", "SC", "any", shared=True), Stage("dtw", "DTW", "not:src")]
    edges = [Edge("src", "dtw", bits_per_channel=RAW_BITS_PER_EPOCH, broadcast=True)]
    return TaskGraph("raw-dtw", [Task("rawdtw", 1.0, stages, edges, group_by="src")], deadline_ms, budget_mw)


def seizure_graph(deadline_ms: float = 10.0, budget_mw: float = 15.0,
                  weights: tuple[float, float, float] = (1.0, 2.0, 4.0)) -> TaskGraph:
    """Local detection, hash broadcast with collision replies, then exact
    confirmation of colliding windows followed by stimulation.

    ``weights`` rank detect, compare and confirm; confirmation channels are
    the scarce ones, so they come first by default.
    """
    wd, wc, wf = weights
    confirm = Task("confirm", wf,
                   [Stage("fetch", "SC", "any", shared=True), Stage("dtw", "DTW", "not:fetch", stimulates=True)],
                   [Edge("fetch", "dtw", bits_per_channel=WINDOW_BITS, broadcast=True)],
                   group_by="fetch", after="compare")
    return TaskGraph("seizure", [_detect_task(wd), _hash_compare_task("compare", wc), confirm],
                     deadline_ms, budget_mw)


def movement_graph(leader: int = 0, deadline_ms: float = 10.0, budget_mw: float = 15.0) -> TaskGraph:
    """Per-node feature extraction and partial classification, summed at a
    fixed leader that reports over the external radio; feedback drives the
    DAC of every feature node."""
    stages = [Stage("feat", "BBF", "any", stimulates=True), Stage("partial", "SVM", "with:feat"),
              Stage("final", "SVM", [leader], rate=0.0, shared=True, external=True, dyn_scale=0.0)]
    edges = [Edge("feat", "partial"), Edge("partial", "final", bits_fixed=PARTIAL_BITS)]
    return TaskGraph("movement", [Task("intent", 1.0, stages, edges, group_by="feat")], deadline_ms, budget_mw)


def spike_sort_graph(deadline_ms: float = 10.0, budget_mw: float = 15.0) -> TaskGraph:
    """Node-local: peak detection, hashing of the peak window, lookup against
    stored template hashes, exact fallback among colliding templates."""
    stages = [Stage("neo", "NEO"), Stage("hconv", "HCONV", "with:neo"), Stage("ngram", "NGRAM", "with:neo"),
              Stage("ccheck", "CCHECK", "with:neo"), Stage("sc", "SC", "with:neo"), Stage("csel", "CSEL", "with:neo")]
    edges = [Edge("neo", "hconv"), Edge("hconv", "ngram"), Edge("ngram", "ccheck"), Edge("sc", "ccheck"),
             Edge("ccheck", "csel")]
    return TaskGraph("spike-sort", [Task("sort", 1.0, stages, edges)], deadline_ms, budget_mw)


GRAPHS = {
    "seizure": seizure_graph,
    "hash-throughput": hash_throughput_graph,
    "raw-dtw": raw_dtw_graph,
    "movement": movement_graph,
    "spike-sort": spike_sort_graph,
}
