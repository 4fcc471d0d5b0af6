import numpy as np
import pytest

from htrkit.emissions import Alphabet, EmissionMatrix


@pytest.fixture
def ab_alphabet() -> Alphabet:
    return Alphabet.from_chars("ab")


def random_matrix(rng: np.random.Generator, timesteps: int, classes: int) -> np.ndarray:
    """Row-normalized uniform draws: a generic valid emission matrix."""
    raw = rng.uniform(0.0, 1.0, size=(timesteps, classes))
    return raw / raw.sum(axis=1, keepdims=True)


def random_emissions(rng: np.random.Generator, timesteps: int, classes: int) -> EmissionMatrix:
    alphabet = Alphabet.from_chars("abcdefgh"[: classes - 1])
    return EmissionMatrix(random_matrix(rng, timesteps, classes), alphabet)
