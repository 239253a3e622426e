"""Shared fixtures for the test suite."""

import numpy as np
import pytest

from fuzzyssvep.signals import StimulusConfig, build_dataset


@pytest.fixture(scope="session")
def four_class_stimulus() -> StimulusConfig:
    """Four phase-coded classes at 10-13 Hz with three decaying harmonics."""
    return StimulusConfig(
        frequencies=(10.0, 11.0, 12.0, 13.0),
        phases=(0.0, 0.5 * np.pi, np.pi, 1.5 * np.pi),
        n_harmonics=3,
        harmonic_amplitudes=(1.0, 0.5, 0.25),
        harmonic_phases=(0.0, 0.0, 0.0),
    )


@pytest.fixture(scope="session")
def tiny_dataset(four_class_stimulus) -> "EpochedDataset":
    """Small clean-ish dataset: 2 subjects, 2 trials/class, 2 s at 256 Hz."""
    return build_dataset(
        four_class_stimulus,
        n_subjects=2,
        trials_per_class=2,
        fs=256.0,
        duration=2.0,
        noise_snr_db=10.0,
        n_channels=4,
        seed=11,
    )
