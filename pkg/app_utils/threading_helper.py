import logging
import os
import threading
from concurrent.futures import Future, ThreadPoolExecutor
from typing import Any, Callable, Dict, Iterable, List, Optional

from app_utils.config_manager import get_config_manager

logger = logging.getLogger(__name__)

_THREAD_PREFIX = "nvgrad-worker"


class ThreadManager:
    """Manager for background work on a capped thread pool.

    Results of ``map_ordered`` are assembled by input index, so the output is
    identical whatever order the workers finish in.
    """

    def __init__(self, max_workers: Optional[int] = None):
        if max_workers is None:
            max_workers = get_config_manager().get_thread_cap() or (os.cpu_count() or 1)
        self.max_workers = max_workers
        self._executor = ThreadPoolExecutor(max_workers=max_workers,
                                            thread_name_prefix=_THREAD_PREFIX)
        self._lock = threading.Lock()
        self.active_workers: Dict[str, Future] = {}
        # futures kept until wait_worker collects them
        self._uncollected: Dict[str, Future] = {}
        self.worker_counter = 0

    def start_worker(self, func: Callable, *args,
                     completion_callback: Optional[Callable] = None, **kwargs) -> str:
        """
        Submit a function to the pool
        Returns worker_id for tracking
        """
        with self._lock:
            worker_id = f"worker_{self.worker_counter}"
            self.worker_counter += 1

        future = self._executor.submit(func, *args, **kwargs)
        with self._lock:
            self.active_workers[worker_id] = future
            if completion_callback is None:
                self._uncollected[worker_id] = future

        def _on_done(done: Future) -> None:
            self._cleanup_worker(worker_id)
            if done.cancelled():
                return
            error = done.exception()
            if error is not None:
                logger.error("Worker %s failed: %s", worker_id, error)
            if completion_callback:
                if error is None:
                    completion_callback(True, "Success", done.result())
                else:
                    completion_callback(False, str(error), None)

        future.add_done_callback(_on_done)
        return worker_id

    def map_ordered(self, func: Callable[[Any], Any], items: Iterable[Any]) -> List[Any]:
        """Apply func to every item in parallel; results keep the input order"""
        items = list(items)
        # nested maps from inside a pool worker run inline so they cannot starve the pool
        nested = threading.current_thread().name.startswith(_THREAD_PREFIX)
        if self.max_workers == 1 or len(items) <= 1 or nested:
            return [func(item) for item in items]
        return list(self._executor.map(func, items))

    def wait_worker(self, worker_id: str, timeout: Optional[float] = None) -> Any:
        """Block until a worker finishes and return its result"""
        with self._lock:
            future = self._uncollected.get(worker_id)
        if future is None:
            raise KeyError(f"Unknown or already collected worker: {worker_id}")
        try:
            return future.result(timeout=timeout)
        finally:
            if future.done():
                with self._lock:
                    self._uncollected.pop(worker_id, None)

    def _cleanup_worker(self, worker_id: str) -> None:
        """Forget a finished worker"""
        with self._lock:
            self.active_workers.pop(worker_id, None)

    def shutdown(self) -> None:
        """Wait for running work and release the pool"""
        self._executor.shutdown(wait=True)


# Singleton instance
_thread_manager: Optional[ThreadManager] = None


def get_thread_manager() -> ThreadManager:
    """Get singleton instance of ThreadManager"""
    global _thread_manager
    if _thread_manager is None:
        _thread_manager = ThreadManager()
    return _thread_manager


def set_thread_cap(max_workers: int) -> ThreadManager:
    """Replace the singleton with one capped at max_workers"""
    global _thread_manager
    if max_workers < 1:
        raise ValueError(f"Thread cap must be positive, got {max_workers}")
    if _thread_manager is not None:
        _thread_manager.shutdown()
    _thread_manager = ThreadManager(max_workers=max_workers)
    return _thread_manager


def run_in_background(func: Callable, *args, **kwargs) -> str:
    """
    Shortcut to run function in background
    Returns worker_id
    """
    return get_thread_manager().start_worker(func, *args, **kwargs)


def parallel_map(func: Callable[[Any], Any], items: Iterable[Any]) -> List[Any]:
    """Shortcut for ordered parallel map on the shared pool"""
    return get_thread_manager().map_ordered(func, items)
