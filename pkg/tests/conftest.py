import json

import numpy as np
import pytest

from galikit import model as model_mod
from galikit import weights
from galikit.cli import run


@pytest.fixture
def gen():
    return np.random.default_rng(1234)


def small_spec(layers=2, heads=2, head_dim=8, mlp_hidden=32):
    return weights.ModelSpec(layers=layers, heads=heads, head_dim=head_dim,
                             mlp_hidden=mlp_hidden)


@pytest.fixture
def small_model():
    return model_mod.build_toy_model(small_spec(), seed=7)


def random_tokens(seed, length, vocab=256):
    return np.random.default_rng(seed).integers(0, vocab, size=length)


def read_outputs(base):
    with open(str(base) + ".csv", "r", encoding="ascii") as f:
        csv_text = f.read()
    with open(str(base) + ".json", "r", encoding="ascii") as f:
        summary = json.load(f)
    return csv_text, summary


def rerun_from_echo(base, tmp_path, name="rerun"):
    """Re-execute a command from its embedded argv echo into a fresh
    base path; returns the new base."""
    _, summary = read_outputs(base)
    new_base = tmp_path / name
    assert run(summary["argv_echo"] + ["--out", str(new_base)]) == 0
    return new_base


def assert_bit_identical(base_a, base_b):
    # argv echoes match because --out is never embedded
    for ext in (".csv", ".json"):
        with open(str(base_a) + ext, "rb") as f:
            a = f.read()
        with open(str(base_b) + ext, "rb") as f:
            b = f.read()
        assert a == b, ext
