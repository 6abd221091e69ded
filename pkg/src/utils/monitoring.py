import time
import threading
import psutil
from typing import Dict, Optional
from collections import deque
from dataclasses import dataclass, field


@dataclass
class PhaseStats:
    seconds: float
    peak_rss_mb: float
    cpu_percent: float


@dataclass
class RunStats:
    phases: Dict[str, PhaseStats] = field(default_factory=dict)

    @property
    def total_seconds(self) -> float:
        return sum(p.seconds for p in self.phases.values())

    @property
    def peak_rss_mb(self) -> float:
        return max((p.peak_rss_mb for p in self.phases.values()), default=0.0)


class Monitoring:
    """Times named phases while sampling this process' memory and CPU in the background"""
    def __init__(self, sample_interval: float = 0.05):
        self._process = psutil.Process()
        self._lock = threading.Lock()
        self._sample_interval = sample_interval
        self._rss_samples = deque(maxlen=10000)
        self._cpu_samples = deque(maxlen=10000)
        self._stats = RunStats()
        self._running = False
        self._monitor_thread: Optional[threading.Thread] = None

    def _monitor_process(self) -> None:
        self._process.cpu_percent(interval=None)
        while self._running:
            rss = self._process.memory_info().rss / (1024 * 1024)  # MB
            cpu = self._process.cpu_percent(interval=None)
            with self._lock:
                self._rss_samples.append(rss)
                self._cpu_samples.append(cpu)
            time.sleep(self._sample_interval)

    def phase(self, name: str) -> '_Phase':
        """Context manager timing one phase; re-entering a name replaces its stats"""
        return _Phase(self, name)

    def _start(self) -> None:
        with self._lock:
            self._rss_samples.clear()
            self._cpu_samples.clear()
        self._running = True
        self._monitor_thread = threading.Thread(target=self._monitor_process, daemon=True)
        self._monitor_thread.start()

    def _stop(self, name: str, seconds: float) -> None:
        self._running = False
        if self._monitor_thread is not None:
            self._monitor_thread.join()
            self._monitor_thread = None
        final_rss = self._process.memory_info().rss / (1024 * 1024)
        with self._lock:
            rss = list(self._rss_samples) + [final_rss]
            cpu = list(self._cpu_samples)
            self._stats.phases[name] = PhaseStats(
                seconds=seconds,
                peak_rss_mb=max(rss),
                cpu_percent=sum(cpu) / len(cpu) if cpu else 0.0,
            )

    def get_stats(self) -> RunStats:
        with self._lock:
            return RunStats(phases=dict(self._stats.phases))


class _Phase:
    def __init__(self, monitor: Monitoring, name: str):
        self._monitor = monitor
        self._name = name
        self._start = 0.0

    def __enter__(self) -> '_Phase':
        self._monitor._start()
        self._start = time.perf_counter()
        return self

    def __exit__(self, *exc) -> None:
        self._monitor._stop(self._name, time.perf_counter() - self._start)
