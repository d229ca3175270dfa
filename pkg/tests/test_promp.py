import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from boxpush.promp import ProMPConfig, basis_matrix, generate

CFG = ProMPConfig(n_basis=5, bandwidth=0.2, weight_scale=0.3, horizon=100)

# scalar-calculator oracle, evaluated pre-build: normalized Gaussians at z=0
PHI_AT_0 = (0.6654874901126967, 0.3046823748152499, 0.029239479680289567,
            0.0005881753506977813, 2.4800410660071588e-06)


def test_rows_sum_to_one():
    phi = basis_matrix(CFG)
    np.testing.assert_allclose(phi.sum(axis=1), 1.0, atol=1e-12)


def test_first_row_matches_scalar_oracle():
    phi = basis_matrix(CFG)
    np.testing.assert_allclose(phi[0], PHI_AT_0, rtol=1e-12)
    # direct re-evaluation of the formula at z = 0
    centers = [0.0, 0.25, 0.5, 0.75, 1.0]
    raw = [math.exp(-(c * c) / (2 * 0.2 ** 2)) for c in centers]
    np.testing.assert_allclose(phi[0], np.array(raw) / sum(raw), rtol=1e-12)


def test_mirror_symmetry():
    phi = basis_matrix(CFG)
    np.testing.assert_allclose(phi, phi[::-1, ::-1], atol=1e-12)


def test_zero_weights_hold_start_bitwise():
    q0 = np.array([0.1, -0.2, 0.3, -1.5, 0.0, 2.0, 0.7])
    traj = generate(CFG, np.zeros((7, 5)), q0)
    assert traj.shape == (100, 7)
    assert np.array_equal(traj, np.tile(q0, (100, 1)))


def test_start_conditioning_bitwise_for_any_weights():
    rng = np.random.default_rng(0)
    q0 = rng.normal(size=7)
    w = rng.normal(size=(7, 5))
    traj = generate(CFG, w, q0)
    assert np.array_equal(traj[0], q0)


def test_linearity_in_weights():
    rng = np.random.default_rng(1)
    q0 = rng.normal(size=7)
    w1, w2 = rng.normal(size=(2, 7, 5))
    a, b = 0.7, -1.3
    lhs = generate(CFG, a * w1 + b * w2, q0) - q0
    rhs = a * (generate(CFG, w1, q0) - q0) + b * (generate(CFG, w2, q0) - q0)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_weight_doubling_doubles_offsets():
    rng = np.random.default_rng(2)
    q0 = rng.normal(size=7)
    w = rng.normal(size=(7, 5))
    one = generate(CFG, w, q0) - q0
    two = generate(CFG, 2 * w, q0) - q0
    np.testing.assert_allclose(two, 2 * one, atol=1e-13)


def test_single_basis_weight_reproduces_shifted_basis():
    q0 = np.zeros(7)
    w = np.zeros((7, 5))
    w[0, 0] = 1.0
    traj = generate(CFG, w, q0)
    phi = basis_matrix(CFG)
    np.testing.assert_allclose(traj[:, 0], CFG.weight_scale * (phi[:, 0] - phi[0, 0]),
                               atol=1e-15)
    np.testing.assert_array_equal(traj[:, 1:], 0.0)


def test_step_increment_bound():
    rng = np.random.default_rng(3)
    w = rng.normal(size=(7, 5))
    traj = generate(CFG, w, np.zeros(7))
    phi = basis_matrix(CFG)
    bound = CFG.weight_scale * np.abs(w).max() * np.abs(np.diff(phi, axis=0)).sum(axis=1).max()
    assert np.abs(np.diff(traj, axis=0)).max() <= bound + 1e-12


def test_velocity_argument_is_inert():
    rng = np.random.default_rng(4)
    q0 = rng.normal(size=7)
    w = rng.normal(size=(7, 5))
    a = generate(CFG, w, q0)
    b = generate(CFG, w, q0, qd0=rng.normal(size=7))
    assert np.array_equal(a, b)


def test_batched_generation_matches_loop():
    rng = np.random.default_rng(5)
    q0 = rng.normal(size=(6, 7))
    w = rng.normal(size=(6, 7, 5))
    batch = generate(CFG, w, q0)
    for i in range(6):
        assert np.array_equal(batch[i], generate(CFG, w[i], q0[i]))


def test_shape_validation():
    with pytest.raises(ValueError):
        generate(CFG, np.zeros((7, 4)), np.zeros(7))
    with pytest.raises(ValueError):
        ProMPConfig(n_basis=1)
    with pytest.raises(ValueError):
        ProMPConfig(bandwidth=0.0)
    with pytest.raises(ValueError):
        ProMPConfig(horizon=1)


@given(st.integers(min_value=2, max_value=12), st.integers(min_value=2, max_value=64),
       st.floats(min_value=0.05, max_value=1.0))
@settings(max_examples=40, deadline=None)
def test_normalization_holds_for_any_config(k, t, bw):
    phi = basis_matrix(ProMPConfig(n_basis=k, bandwidth=bw, horizon=t))
    np.testing.assert_allclose(phi.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(phi >= 0.0)