#!/usr/bin/env python3
import asyncio
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

from fcn_texton_forest.lib.logging_trait import LoggingTrait

T = TypeVar("T")
R = TypeVar("R")


class WorkerPool(LoggingTrait):
    """
    Runs independent work items on a thread pool driven by an asyncio loop,
    results are always returned in input order
    """

    def __init__(self, threads: Optional[int] = None):
        self.threads: int = max(1, int(threads or os.cpu_count() or 1))

    def map(self, func: Callable[[T], R], items: Iterable[T]) -> List[R]:
        items = list(items)
        if self.threads == 1 or len(items) < 2:
            return [func(item) for item in items]
        try:
            asyncio.get_running_loop()
        except RuntimeError:
            return asyncio.run(self.map_async(func, items))
        # already inside a loop (async caller using the sync api)
        with ThreadPoolExecutor(max_workers=self.threads) as executor:
            return list(executor.map(func, items))

    async def map_async(self, func: Callable[[T], R], items: Iterable[T]) -> List[R]:
        items = list(items)
        if self.threads == 1:
            return [func(item) for item in items]
        loop = asyncio.get_running_loop()
        self.log_debug(f"dispatching {len(items)} items on {self.threads} threads")
        with ThreadPoolExecutor(max_workers=self.threads) as executor:
            futures = [loop.run_in_executor(executor, func, item) for item in items]
            return list(await asyncio.gather(*futures))
