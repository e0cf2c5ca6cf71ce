"""Worker-count control shared by the batched solvers."""
import os
from concurrent.futures import ThreadPoolExecutor


def worker_count():
    """Number of worker threads, capped by ``GEOLGP_THREADS`` when set."""
    n = os.cpu_count() or 1
    cap = os.environ.get("GEOLGP_THREADS")
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            pass
    return n


def map_chunks(func, chunks):
    """Apply ``func`` to each chunk, in order, using the worker pool.

    Results come back in input order so merged outputs are deterministic.
    """
    chunks = list(chunks)
    n = worker_count()
    if n <= 1 or len(chunks) <= 1:
        return [func(c) for c in chunks]
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(func, chunks))
