"""Shared fixtures: one overfit toy network reused across test modules."""

import sys
import time
from types import SimpleNamespace

import pytest

from slidescribe.data import (
    make_toy_dataset,
    save_dataset,
    save_label_set,
    toy_label_set,
)
from slidescribe.network import save_checkpoint, toy_network_config
from slidescribe.training import TrainConfig, train

TOY_SLIDES = 8
TOY_CLASSES = 5
TOY_SEED = 0
TOY_ITERATIONS = 500


def overfit_train_config(iterations=TOY_ITERATIONS):
    # memorization run: fixed-size crops, no stochastic augmentation
    return TrainConfig(
        lr0=0.02,
        max_iteration=iterations,
        batch=2,
        crop=(96, 128),
        seed=TOY_SEED,
        enable_scale=False,
        enable_blur=False,
        enable_color=False,
    )


@pytest.fixture(scope="session")
def toy_bundle(tmp_path_factory):
    """Toy dataset plus a network overfit on it, with artifacts on disk."""
    root = tmp_path_factory.mktemp("toy")
    samples = make_toy_dataset(TOY_SLIDES, TOY_CLASSES, seed=TOY_SEED)
    label_set = toy_label_set(TOY_CLASSES)

    started = time.time()
    network, history = train(
        samples, toy_network_config(TOY_CLASSES), overfit_train_config()
    )
    train_seconds = time.time() - started

    data_root = root / "data"
    save_dataset(samples, data_root, "train")
    save_label_set(data_root / "labels.txt", label_set)
    checkpoint = root / "toy.npz"
    save_checkpoint(
        checkpoint,
        network,
        labels=label_set.names,
        extra={"coarse_map": dict(label_set.coarse_map)},
    )
    return SimpleNamespace(
        samples=samples,
        label_set=label_set,
        network=network,
        history=history,
        checkpoint=checkpoint,
        data_root=data_root,
        train_seconds=train_seconds,
    )


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion, when the gate ran."""
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if not results:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for name, passed, detail in results:
        status = "PASS" if passed else "FAIL"
        line = f"[{status}] {name}" + (f": {detail}" if detail else "")
        terminalreporter.write_line(line)
