import threading
import time

import pytest

from app_utils.threading_helper import ThreadManager, parallel_map, set_thread_cap


@pytest.fixture
def manager():
    pool = ThreadManager(max_workers=4)
    yield pool
    pool.shutdown()


def test_map_ordered_keeps_input_order(manager):
    def slow_square(n):
        time.sleep(0.001 * (10 - n))
        return n * n

    assert manager.map_ordered(slow_square, range(10)) == [n * n for n in range(10)]


def test_nested_maps_run_inline(manager):
    def inner(n):
        return threading.current_thread().name

    def outer(n):
        return manager.map_ordered(inner, range(3))

    for names in manager.map_ordered(outer, range(8)):
        assert len(set(names)) == 1


def test_wait_worker_returns_the_result_once(manager):
    worker_id = manager.start_worker(lambda a, b: a + b, 2, b=3)
    assert manager.wait_worker(worker_id, timeout=5) == 5
    with pytest.raises(KeyError):
        manager.wait_worker(worker_id)


def test_wait_worker_reraises_failures(manager):
    def fail():
        raise ValueError("bad input")

    worker_id = manager.start_worker(fail)
    with pytest.raises(ValueError, match="bad input"):
        manager.wait_worker(worker_id, timeout=5)


def test_completion_callback_reports_outcome(manager):
    outcomes = []
    done = threading.Event()

    def record(success, message, result):
        outcomes.append((success, message, result))
        done.set()

    manager.start_worker(lambda: 42, completion_callback=record)
    assert done.wait(5)
    assert outcomes == [(True, "Success", 42)]


def test_thread_cap_must_be_positive():
    with pytest.raises(ValueError):
        set_thread_cap(0)


def test_parallel_map_matches_a_plain_loop():
    assert parallel_map(str, [3, 1, 2]) == ["3", "1", "2"]
