"""Wall-clock harness and the dense / squeezed / masked matmul kernels."""

from __future__ import annotations

import csv
import statistics
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass

import numpy as np

from .pruner import keep_count

DEFAULT_TRIALS = 30
DEFAULT_WARMUPS = 5


def methodology(trials=DEFAULT_TRIALS, warmups=DEFAULT_WARMUPS) -> str:
    return (
        f"median of {trials} timed runs after {warmups} warmups; "
        "compared kernels timed round-robin within each trial; "
        "time.perf_counter; BLAS limited to 1 thread when threadpoolctl is available"
    )


@contextmanager
def single_thread():
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # pragma: no cover
        yield
        return
    with threadpool_limits(limits=1):
        yield


def time_callable(fn, trials=DEFAULT_TRIALS, warmups=DEFAULT_WARMUPS) -> float:
    """Median seconds per call."""
    if trials < 1:
        raise ValueError("need at least one timed trial")
    for _ in range(warmups):
        fn()
    samples = []
    for _ in range(trials):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return statistics.median(samples)


def time_interleaved(fns, trials=DEFAULT_TRIALS, warmups=DEFAULT_WARMUPS) -> list[float]:
    """Median seconds per call for each of ``fns``, timed round-robin.

    Every trial runs each function once, so slow drift of the host (frequency
    scaling, noisy neighbours) lands on all of them alike.
    """
    if trials < 1:
        raise ValueError("need at least one timed trial")
    for _ in range(warmups):
        for fn in fns:
            fn()
    samples = [[] for _ in fns]
    for t in range(trials):
        # Rotate the starting function so none is always first.
        order = [(t + i) % len(fns) for i in range(len(fns))]
        for i in order:
            t0 = time.perf_counter()
            fns[i]()
            samples[i].append(time.perf_counter() - t0)
    return [statistics.median(s) for s in samples]


@dataclass
class KernelTiming:
    dim: int
    keep: float
    kept_dim: int
    batch: int
    dense_s: float
    squeezed_s: float
    masked_s: float

    @property
    def squeezed_ratio(self) -> float:
        return self.squeezed_s / self.dense_s

    @property
    def masked_ratio(self) -> float:
        return self.masked_s / self.dense_s

    def row(self) -> dict:
        d = asdict(self)
        d["squeezed_ratio"] = self.squeezed_ratio
        d["masked_ratio"] = self.masked_ratio
        return d


def bench_kernels(
    sizes=(256, 512, 1024),
    keep_ratios=(1.0, 0.5),
    batch=256,
    trials=DEFAULT_TRIALS,
    warmups=DEFAULT_WARMUPS,
    dtype=np.float64,
    seed=0,
) -> list[KernelTiming]:
    """Time ``W @ X`` three ways for each ``(D, keep)``, interleaved per trial.

    dense: the full ``D x D`` matrix. squeezed: the ``K x K`` matrix left after
    structured pruning with ``K = round(keep * D)``. masked: the full ``D x D``
    matrix with ``D*D - K*K`` randomly placed entries zeroed, so it holds the
    same number of nonzeros as the squeezed one.
    """
    rng = np.random.default_rng(seed)
    out = []
    with single_thread():
        for d in sizes:
            if d < 64:
                raise ValueError("kernel sizes must be >= 64")
            w = rng.standard_normal((d, d)).astype(dtype)
            x = rng.standard_normal((d, batch)).astype(dtype)
            for keep in keep_ratios:
                k = keep_count(keep, d)
                rows = np.sort(rng.choice(d, k, replace=False))
                ws = np.ascontiguousarray(w[np.ix_(rows, rows)])
                xs = np.ascontiguousarray(x[rows])
                flat = np.ones(d * d, dtype=bool)
                flat[rng.choice(d * d, d * d - k * k, replace=False)] = False
                wm = w * flat.reshape(d, d)
                dense_t, squeezed_t, masked_t = time_interleaved(
                    [lambda: w @ x, lambda: ws @ xs, lambda: wm @ x], trials, warmups
                )
                out.append(KernelTiming(d, keep, k, batch, dense_t, squeezed_t, masked_t))
    return out


def write_timings_csv(rows, path) -> None:
    dicts = [r.row() if isinstance(r, KernelTiming) else r for r in rows]
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=list(dicts[0]))
        writer.writeheader()
        writer.writerows(dicts)
