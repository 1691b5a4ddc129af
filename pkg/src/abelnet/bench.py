"""Layer-parallel gradient benchmark.

Times the batch-weighted chain gradient at several worker counts for every
available kernel backend, asserting that each parallel result is bitwise
equal to the single-worker result of the same backend (the per-layer tasks
write disjoint outputs, so any difference is a bug). BLAS internal threading
is pinned to one thread during timing when threadpoolctl is available, so
the reported scaling isolates the per-layer parallelism.
"""

from __future__ import annotations

import time
from contextlib import nullcontext
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .beliefnet import BeliefNet, batch_weighted_grad, sample_forward_batch
from .numcore import RngStream


@dataclass
class BenchRow:
    backend: str
    workers: int
    seconds: float
    speedup: float
    equal_serial: bool


def _limit_blas_threads():
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        return nullcontext()
    return threadpool_limits(limits=1)


def _grad_arrays(grad):
    return [a for a in grad.arrays() if a is not None]


def run_bench(
    sizes=(256,) * 8,
    batch=512,
    workers=(1, 2, 4),
    repeats=3,
    seed=0,
    backends=None,
):
    """Returns a list of BenchRow, one per (backend, worker count)."""
    workers = sorted(set([1] + [int(w) for w in workers]))  # serial is the reference
    root = RngStream(seed)
    net = BeliefNet.dense(list(sizes), root.derive(1))
    states, probs = sample_forward_batch(net, root.derive(2), batch)
    coef = root.derive(3).normals(batch) / batch
    if backends is None:
        backends = _kernels.available_backends()

    rows = []
    for backend in backends:
        with _kernels.forced_backend(backend):
            reference = None
            with _limit_blas_threads():
                for w in workers:
                    best = np.inf
                    grad = None
                    for _ in range(repeats):
                        t0 = time.perf_counter()
                        grad = batch_weighted_grad(net, states, coef, probs=probs, workers=w)
                        best = min(best, time.perf_counter() - t0)
                    if w == workers[0]:
                        reference = grad
                        base = best
                    equal = all(
                        np.array_equal(a, b)
                        for a, b in zip(_grad_arrays(grad), _grad_arrays(reference))
                    )
                    rows.append(BenchRow(backend, w, best, base / best, equal))
    return rows


def bench_csv_lines(rows) -> list[str]:
    lines = ["backend,workers,seconds,speedup,equal_serial"]
    for r in rows:
        lines.append(f"{r.backend},{r.workers},{r.seconds!r},{r.speedup!r},{int(r.equal_serial)}")
    return lines
