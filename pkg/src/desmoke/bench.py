"""Per-frame throughput measurement of the full desmoking pipeline."""

from __future__ import annotations

import json
import os
import platform
import time
from dataclasses import asdict, dataclass

import torch

from .imagecore import ImageRgb
from .pipeline import Desmoker, timed_pipeline

STAGES = ("dark_channel", "guided_filter", "embed", "generator")


@dataclass
class BenchReport:
    stage_ms: dict[str, float]  # mean per frame
    total_ms: float  # whole timed loop
    fps: float
    iterations: int
    warmup: int
    resolution: int
    hardware: str

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "BenchReport":
        return cls(**json.loads(text))

    def text(self) -> str:
        lines = [f"frames: {self.iterations} (after {self.warmup} warmup) at {self.resolution}x{self.resolution}"]
        for k in STAGES:
            lines.append(f"  {k:<14} {self.stage_ms[k]:9.3f} ms/frame")
        lines.append(f"  {'end-to-end':<14} {self.total_ms / self.iterations:9.3f} ms/frame")
        lines.append(f"throughput: {self.fps:.2f} fps")
        lines.append(f"hardware: {self.hardware}")
        return "\n".join(lines)


def hardware_string() -> str:
    cpu = platform.processor() or platform.machine()
    return f"{platform.system()} {cpu}, {os.cpu_count()} cpus, torch {torch.__version__} ({torch.get_num_threads()} threads)"


def run_bench(model: Desmoker, img: ImageRgb, iterations: int = 50, warmup: int = 5) -> BenchReport:
    if iterations < 1 or warmup < 1:
        raise ValueError("iterations and warmup must be >= 1")
    img = model.fit(img)
    clock = time.perf_counter
    for _ in range(warmup):
        timed_pipeline(model, img, clock)
    sums = dict.fromkeys(STAGES, 0.0)
    t0 = clock()
    for _ in range(iterations):
        _, stages = timed_pipeline(model, img, clock)
        for k, v in stages.items():
            sums[k] += v
    total = clock() - t0
    return BenchReport(
        stage_ms={k: 1000.0 * v / iterations for k, v in sums.items()},
        total_ms=1000.0 * total,
        fps=iterations / total,
        iterations=iterations,
        warmup=warmup,
        resolution=model.resolution,
        hardware=hardware_string(),
    )
