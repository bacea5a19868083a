import math

import numpy as np
import pytest

from semimg.errors import EvolutionDiverged
from semimg.levelset import (LevelSetState, crisp_labels, curvature, data_term, dirac, energy,
                             evolve, heaviside, indicators, init_phi, partition_means,
                             region_indicator, render, step, update_means)

DELTA = (2 / math.pi) * math.atan(3.0)  # H(3) - H(-3) with epsilon = 1


def test_heaviside_values():
    assert heaviside(0.0) == 0.5
    assert heaviside(10.0) == pytest.approx(0.9682744825694465, abs=1e-15)
    assert heaviside(-10.0) == pytest.approx(1 - 0.9682744825694465, abs=1e-15)


def test_dirac_is_derivative():
    x = np.linspace(-5, 5, 41)
    h = 1e-6
    np.testing.assert_allclose(dirac(x), (heaviside(x + h) - heaviside(x - h)) / (2 * h), atol=1e-9)


@pytest.mark.parametrize("m", [1, 2, 3, 4])
def test_indicators_partition_unity(m, rng):
    phi = rng.normal(0, 3, (m, 7, 5))
    chi = indicators(phi)
    assert chi.shape == (2 ** m, 7, 5)
    assert np.all(chi >= 0)
    np.testing.assert_allclose(chi.sum(0), 1.0, atol=1e-12)


def test_region_indicator_bit_order(rng):
    phi = rng.normal(0, 2, (2, 4, 4))
    state = LevelSetState(phi, np.zeros(4))
    h = heaviside(phi)
    # phi_1 is the least significant bit
    np.testing.assert_allclose(region_indicator(state, 2), h[0] * (1 - h[1]))
    np.testing.assert_allclose(region_indicator(state, 3), (1 - h[0]) * h[1])
    for k in range(1, 5):
        np.testing.assert_allclose(region_indicator(state, k), indicators(phi)[k - 1])
    with pytest.raises(IndexError):
        region_indicator(state, 5)


def test_length_term_half_split():
    phi = np.full((8, 8), -3.0)
    phi[:, 4:] = 3.0
    state = LevelSetState(phi, [0.5, 0.5], v=0.01)
    img = np.full((8, 8), 0.5)
    assert data_term(img, state) == 0.0
    assert energy(img, state) == pytest.approx(0.01 * 8 * DELTA, rel=1e-12)


def test_length_term_centre_block():
    # a 2x2 positive block in an 8x8 negative field: 8 outside neighbours at
    # Delta/2 each, 4 inside pixels at sqrt(2) * Delta/2 each
    phi = np.full((8, 8), -3.0)
    phi[3:5, 3:5] = 3.0
    state = LevelSetState(phi, [0.5, 0.5], v=1.0)
    img = np.full((8, 8), 0.5)
    assert energy(img, state) == pytest.approx((4 + 2 * math.sqrt(2)) * DELTA, rel=1e-12)


def test_length_term_checkerboard():
    # interior gradients cancel; 24 border pixels see Delta, 4 corners sqrt(2) * Delta
    i = np.add.outer(np.arange(8), np.arange(8))
    phi = np.where(i % 2 == 0, 3.0, -3.0)
    state = LevelSetState(phi, [0.5, 0.5], v=0.01)
    img = np.full((8, 8), 0.5)
    assert energy(img, state) == pytest.approx(0.01 * (24 + 4 * math.sqrt(2)) * DELTA, rel=1e-12)


def test_data_term_hand_value():
    img = np.array([[0.0, 1.0]])
    phi = np.array([[-1e6, 1e6]])
    state = LevelSetState(phi, [0.25, 0.5], v=0.0)
    # soft indicators are nearly crisp; residuals 0.25^2 and 0.5^2
    assert data_term(img, state) == pytest.approx(0.0625 + 0.25, abs=1e-6)


def test_state_validation():
    with pytest.raises(ValueError):
        LevelSetState(np.zeros((2, 3, 3)), np.zeros(3))
    with pytest.raises(EvolutionDiverged):
        LevelSetState(np.full((3, 3), np.nan), np.zeros(2))


def test_curvature_of_circle():
    y, x = np.mgrid[-20:21, -20:21].astype(float)
    r = np.hypot(x, y)
    kappa = curvature(r)
    ring = (r > 8) & (r < 12)
    np.testing.assert_allclose(kappa[ring], 1 / r[ring], rtol=0.05)


def test_curvature_flat_zero():
    phi = np.tile(np.arange(10.0), (6, 1))
    assert np.abs(curvature(phi)).max() < 1e-12


def test_init_phi_signs_and_clip():
    labels = np.zeros((10, 10), dtype=int)
    labels[:, 5:] = 1
    labels[5:, :] |= 2
    phi = init_phi(labels, 2)
    assert np.abs(phi).max() <= 3.0
    np.testing.assert_array_equal(crisp_labels(LevelSetState(phi, np.zeros(4))), labels)


def test_init_phi_uniform_plane():
    phi = init_phi(np.zeros((4, 4), dtype=int), 1)
    assert np.all(phi == -3.0)


def _two_region(rng, noise=0.0):
    img = np.full((24, 24), 0.2)
    img[:, 12:] = 0.8
    return np.clip(img + rng.normal(0, noise, img.shape), 0, 1) if noise else img


def test_energy_monotone_two_region():
    rng = np.random.default_rng(3)
    img = _two_region(rng, 0.05)
    labels = (rng.random(img.shape) > 0.5).astype(int)
    state = LevelSetState(init_phi(labels, 1), [0.3, 0.7], v=0.01)
    state = LevelSetState(state.phi, update_means(img, state), v=0.01)
    prev = energy(img, state)
    for _ in range(30):
        state = step(img, state)
        state = LevelSetState(state.phi, update_means(img, state), v=0.01)
        e = energy(img, state)
        assert e <= prev + 1e-9
        prev = e


def test_update_means_weighted():
    img = np.array([[0.0, 1.0]])
    phi = np.array([[-2.0, 2.0]])
    state = LevelSetState(phi, [0.0, 0.0])
    chi = indicators(phi)
    expect = (chi * img).reshape(2, -1).sum(1) / chi.reshape(2, -1).sum(1)
    np.testing.assert_allclose(update_means(img, state), expect)


def test_evolve_recovers_two_regions():
    rng = np.random.default_rng(9)
    img = _two_region(rng, 0.02)
    truth = (np.arange(24) >= 12)[None, :].repeat(24, 0).astype(int)
    state = LevelSetState(init_phi(truth, 1), [0.2, 0.8])
    out = evolve(img, state, 5)
    means = partition_means(img, crisp_labels(out), out.means)
    assert means[0] == pytest.approx(0.2, rel=0.02)
    assert means[1] == pytest.approx(0.8, rel=0.02)


def test_render_exact_on_two_tone():
    img = _two_region(np.random.default_rng(0))
    labels = (img > 0.5).astype(int)
    out = render(img, evolve(img, LevelSetState(init_phi(labels, 1), [0.2, 0.8]), 5))
    np.testing.assert_array_equal(out, img)


def test_partition_means_fallback():
    out = partition_means(np.array([0.1, 0.3]), np.array([0, 0]), [9.0, 7.0])
    assert out[0] == pytest.approx(0.2) and out[1] == 7.0


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_step_diverged():
    state = LevelSetState(np.zeros((1, 3, 3)), [0.0, 1.0])
    with pytest.raises(EvolutionDiverged):
        step(np.full((3, 3), np.inf), state)
