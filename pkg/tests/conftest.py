import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from mlpf_hw import synth, trainer  # noqa: E402


class DenseExperiment:
    """Train on dense seed 0, test on an independent dense draw (seed 100)."""

    def __init__(self):
        self.train_events = synth.make_dataset("dense", 5.0, 2.0, seed=0)
        self.test_events = synth.make_dataset("dense", 5.0, 2.0, seed=100)
        self.train_set = trainer.build_dataset(self.train_events)
        self.test_set = trainer.build_dataset(self.test_events)
        self._models = {}

    def model(self, bits):
        if bits not in self._models:
            self._models[bits] = trainer.train(self.train_set, trainer.TrainConfig(bits=bits))
        return self._models[bits]


@pytest.fixture(scope="session")
def dense():
    return DenseExperiment()


def pytest_terminal_summary(terminalreporter):
    from acceptance_report import RESULTS
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
