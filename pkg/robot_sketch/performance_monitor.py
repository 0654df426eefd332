# Performance Monitor
"""
Stage timing for pipeline runs. Timings are only logged, never written into
output files, so repeated runs stay byte-identical.
"""

import time
from collections import defaultdict
from contextlib import contextmanager
from typing import Dict, Iterator


class PerformanceMonitor:
    def __init__(self):
        self.stats = defaultdict(lambda: defaultdict(int))
        self.stage_times = defaultdict(list)

    def log_stage(self, run: str, stage: str):
        self.stats[run][stage] += 1

    def log_stage_time(self, run: str, stage: str, elapsed_ms: float):
        self.stage_times[f"{run}_{stage}"].append(elapsed_ms)

    @contextmanager
    def timed(self, run: str, stage: str) -> Iterator[None]:
        self.log_stage(run, stage)
        started = time.perf_counter()
        try:
            yield
        finally:
            self.log_stage_time(run, stage, (time.perf_counter() - started) * 1000.0)

    def get_avg_stage_time(self, run: str, stage: str) -> float:
        times = self.stage_times[f"{run}_{stage}"]
        if not times:
            return 0.0
        return sum(times) / len(times)

    def get_summary(self) -> Dict[str, Dict[str, Dict[str, float]]]:
        summary = {}
        for run, stages in self.stats.items():
            summary[run] = {}
            for stage, count in stages.items():
                summary[run][stage] = {
                    'count': count,
                    'avg_ms': self.get_avg_stage_time(run, stage),
                }
        return summary

    def reset(self):
        self.stats.clear()
        self.stage_times.clear()


# Singleton instance
performance_monitor = PerformanceMonitor()


def get_performance_monitor() -> PerformanceMonitor:
    return performance_monitor
