"""Round trips for the JSON interchange formats."""

import numpy as np

from memtensor.models import TimeGrid, example_initial_state, example_model
from memtensor.linalg import SpaceLayout, partial_trace
from memtensor.tomography import FixedState, TrueEnvironment, reconstruct_family
from memtensor.transfer import MemoryConfig, build_tensors
from memtensor.serialization import (
    complex_matrix_from_json,
    complex_matrix_to_json,
    family_from_json,
    family_to_json,
    load_json,
    save_json,
    tensors_from_json,
    tensors_to_json,
)

RNG = np.random.default_rng(5150)


def test_complex_matrix_round_trip():
    m = RNG.standard_normal((3, 4)) + 1j * RNG.standard_normal((3, 4))
    np.testing.assert_array_equal(complex_matrix_from_json(complex_matrix_to_json(m)), m)


def _small_family():
    model = example_model()
    rho0 = example_initial_state()
    tau = partial_trace(rho0, SpaceLayout(2, 2), "environment")
    grid = TimeGrid(0.0, 0.625, 3)
    return reconstruct_family(model, grid, FixedState(tau), substeps=8)


def test_family_round_trip_via_file(tmp_path):
    family = _small_family()
    path = tmp_path / "family.json"
    save_json(family_to_json(family), path)
    loaded = family_from_json(load_json(path))
    assert loaded.grid == family.grid
    assert set(loaded.maps) == set(family.maps)
    for key in family.maps:
        assert np.max(np.abs(loaded.maps[key] - family.maps[key])) < 1e-15
    for j in family.reference_states:
        assert np.max(np.abs(loaded.reference_states[j] - family.reference_states[j])) < 1e-15
    np.testing.assert_allclose(loaded.policy.tau, family.policy.tau, atol=1e-15)


def test_family_policy_descriptors():
    model = example_model()
    grid = TimeGrid(0.0, 0.625, 1)
    family = reconstruct_family(
        model, grid, TrueEnvironment(), substeps=4, rho_se0=example_initial_state()
    )
    loaded = family_from_json(family_to_json(family))
    assert isinstance(loaded.policy, TrueEnvironment)


def test_tensor_set_round_trip(tmp_path):
    family = _small_family()
    config = MemoryConfig(dt=0.625, m=3, c=3)
    tensors = build_tensors(family, config, dense_window=3)
    tensors.residuals[1] = RNG.standard_normal((2, 2)) + 1j * RNG.standard_normal((2, 2))
    path = tmp_path / "tensors.json"
    save_json(tensors_to_json(tensors), path)
    loaded = tensors_from_json(load_json(path))
    assert loaded.config == config
    assert set(loaded.tensors) == set(tensors.tensors)
    for key in tensors.tensors:
        assert np.max(np.abs(loaded.tensors[key] - tensors.tensors[key])) < 1e-15
    assert np.max(np.abs(loaded.residuals[1] - tensors.residuals[1])) < 1e-15


def test_format_guards():
    import pytest

    with pytest.raises(ValueError):
        family_from_json({"format": "something-else"})
    with pytest.raises(ValueError):
        tensors_from_json({"format": "memtensor-map-family"})
