
import pytest

from ppmh.metrics import SolveCounter
from ppmh.parallel import WORKERS_ENV, WorkerPool, chunk_bounds, default_workers

def test_chunks_are_contiguous_and_cover():
    b = chunk_bounds(10, 4)
    assert b[0][0] == 0 and b[-1][1] == 10
    assert all(b[i][1] == b[i + 1][0] for i in range(3))

@pytest.mark.parametrize("workers", [1, 3, 8])
def test_map_preserves_order_and_counts(workers):
    counter = SolveCounter(workers)

    def task(i, tally):
        tally.factor_solves += 1
        return i * i

    with WorkerPool(workers) as pool:
        assert pool.map(task, 10, counter) == [i * i for i in range(10)]
    assert counter.total() == 10
    assert counter.effective() <= counter.total() <= workers * counter.effective()

def test_counter_pool_mismatch():
    with WorkerPool(2) as pool, pytest.raises(ValueError):
        pool.map(lambda i, t: i, 3, SolveCounter(3))

def test_default_workers_env(monkeypatch):
    monkeypatch.setenv(WORKERS_ENV, "3")
    assert default_workers() == 3
    monkeypatch.delenv(WORKERS_ENV)
    assert default_workers() >= 1
