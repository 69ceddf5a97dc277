#!/usr/bin/env python3
import os
import sys
import threading
import time

import pytest

try:
    import fcn_texton_forest
except ImportError:
    sys.path.append(
        os.path.dirname(os.path.dirname(os.path.dirname(os.path.realpath(__file__))))
    )

from fcn_texton_forest.lib.workers import WorkerPool


def _slow_square(value: int) -> int:
    # later items finish first
    time.sleep(0.002 * (10 - value))
    return value * value


def test_map_keeps_input_order():
    assert WorkerPool(1).map(_slow_square, range(10)) == [v * v for v in range(10)]
    assert WorkerPool(4).map(_slow_square, range(10)) == [v * v for v in range(10)]
    assert WorkerPool(4).map(_slow_square, []) == []


def test_single_thread_runs_inline():
    seen = set()
    WorkerPool(1).map(lambda _: seen.add(threading.get_ident()), range(5))
    assert seen == {threading.get_ident()}


def test_thread_count_defaults():
    assert WorkerPool().threads >= 1
    assert WorkerPool(0).threads >= 1
    assert WorkerPool(3).threads == 3


@pytest.mark.asyncio
async def test_map_async_order():
    pool = WorkerPool(3)
    assert await pool.map_async(_slow_square, range(10)) == [v * v for v in range(10)]


@pytest.mark.asyncio
async def test_sync_map_inside_running_loop():
    assert WorkerPool(2).map(_slow_square, range(6)) == [v * v for v in range(6)]


def test_exceptions_propagate():
    def explode(value):
        if value == 3:
            raise RuntimeError("boom")
        return value

    with pytest.raises(RuntimeError):
        WorkerPool(2).map(explode, range(5))


if __name__ == "__main__":
    sys.exit(pytest.main([__file__]))
