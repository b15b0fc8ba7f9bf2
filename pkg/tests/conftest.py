from __future__ import annotations

import time
from fractions import Fraction

import numpy as np
import pytest

from desmoke.dataset import generate, make_clear_frames
from desmoke.imagecore import ImageRgb
from desmoke.trainer import TrainConfig, train

# desk-scale experiment shared by the acceptance, probe and CLI tests
DESK = dict(n_train=50, n_test=16, resolution=64, seed=2024)
DESK_TRAIN = dict(batch_size=8, max_steps=200, width_scale=Fraction(1, 4), seed=7, log_every=50, verbose=False)

ACCEPTANCE: dict[str, tuple[str, str]] = {}


def record(key: str, status: str, detail: str) -> None:
    ACCEPTANCE[key] = (status, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: int(k.split()[0][2:])):
        status, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"[{status}] {key}: {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_rgb(rng, h, w) -> ImageRgb:
    return ImageRgb(rng.random((h, w, 3)))


@pytest.fixture(scope="session")
def desk_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("desk")
    make_clear_frames(root / "frames", DESK["n_train"] + DESK["n_test"], DESK["resolution"], seed=1)
    return generate(
        root / "frames", root / "data", DESK["n_train"], DESK["n_test"],
        seed=DESK["seed"], resolution=DESK["resolution"],
    )


@pytest.fixture(scope="session")
def desk_run(desk_dataset, tmp_path_factory):
    out = tmp_path_factory.mktemp("desk_run")
    t0 = time.perf_counter()
    res = train(desk_dataset, TrainConfig(**DESK_TRAIN), out)
    res.seconds = time.perf_counter() - t0
    res.out_dir = out
    return res
