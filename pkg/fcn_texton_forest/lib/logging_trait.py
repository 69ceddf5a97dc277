#!/usr/bin/env python3
import logging
from contextlib import contextmanager
from time import perf_counter
from typing import Dict, Iterator, Optional


class LoggingTrait:
    def get_logger(self) -> logging.Logger:
        return logging.getLogger(type(self).__name__)

    def log_debug(self, msg: str):
        self.get_logger().debug(msg)

    def log_info(self, msg: str):
        self.get_logger().info(msg)

    def log_warning(self, msg: str):
        self.get_logger().warning(msg)

    @contextmanager
    def log_duration(
        self, stage: str, timings: Optional[Dict[str, float]] = None
    ) -> Iterator[None]:
        """
        Logs wall-clock duration of the wrapped block, accumulating it into timings[stage] when given

        @param stage: label used in the log line and as timings key
        @param timings: optional dict collecting seconds per stage
        """
        started = perf_counter()
        try:
            yield
        finally:
            elapsed = perf_counter() - started
            if timings is not None:
                timings[stage] = timings.get(stage, 0.0) + elapsed
            self.log_debug(f"[{stage}] took {elapsed:.3f}s")
