"""Loopback benchmark harness."""

from src.bench.benchmark import BenchmarkAbortedError, BenchmarkRunner, BenchResult
from src.bench.config import BenchConfig

__all__ = ["BenchConfig", "BenchmarkRunner", "BenchResult", "BenchmarkAbortedError"]
