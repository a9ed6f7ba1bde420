import mpmath
import numpy as np
import pytest

from conftest import band_limited_phase
from holoplex.core import TWO_PI, ComplexField, Grid, GridMismatchError, PhaseMap, WaveSpec, phase_to_field
from holoplex.loss import LossConfig, loss_and_grad
from holoplex.mask import SpectrumMask, hard_mask, soft_mask_jacobian
from holoplex.propagate import (
    FrequencyGrid,
    adjoint_gradient,
    diffraction_angle,
    evaluate,
    make_transfer,
    phase_gradient_energy,
    propagate,
    reconstruct_amplitude,
    reconstruct_intensity,
    spectral_second_moment,
)

MSE = LossConfig(1.0, 0.0)


def fd_gradient(phi, H, target, loss, mask=None, eps=1e-6, tau=None):
    g = np.zeros_like(phi)
    for idx in np.ndindex(phi.shape):
        p, m = phi.copy(), phi.copy()
        p[idx] += eps
        m[idx] -= eps
        g[idx] = (evaluate(p, H, target, loss, mask, tau=tau, need_grad=False).loss
                  - evaluate(m, H, target, loss, mask, tau=tau, need_grad=False).loss) / (2 * eps)
    return g


def test_frequency_grid():
    g = Grid(8, 6, 2e-6)
    fg = FrequencyGrid.of(g)
    assert fg.fx[0, 3] == 0 and fg.fy[4, 0] == 0
    np.testing.assert_allclose(fg.fx[0, 1:], -fg.fx[0, 1:][::-1])
    assert np.abs(fg.fx).max() == pytest.approx(1 / (2 * 2e-6))
    assert np.abs(fg.fy).max() == pytest.approx(1 / (2 * 2e-6))


def test_transfer_z0_is_ones(grid64, green):
    H = make_transfer(grid64, green, 0.0)
    np.testing.assert_array_equal(H.data, 1.0)


def test_transfer_dc_phase_extended_precision(grid64, green):
    H = make_transfer(grid64, green, 0.1)
    mpmath.mp.dps = 40
    cycles = mpmath.frac(mpmath.mpf("0.1") / mpmath.mpf("520e-9"))
    expected = float(cycles * 2 * mpmath.pi)
    got = np.mod(np.angle(H.data[32, 32]), TWO_PI)
    assert got == pytest.approx(expected, abs=1e-9)


def test_transfer_evanescent_band_zero(green):
    # pitch small enough that the corners of the spectrum are evanescent
    g = Grid(32, 32, 0.2e-6)
    H = make_transfer(g, green, 1e-3)
    fg = FrequencyGrid.of(g)
    ev = green.wavelength**2 * fg.f2 > 1
    assert ev.any() and (~ev).any()
    assert np.all(H.data[ev] == 0)
    np.testing.assert_allclose(np.abs(H.data[~ev]), 1.0, atol=1e-14)


def test_transfer_conjugate_symmetry(green):
    g = Grid(32, 32, 0.3e-6)
    Hp, Hm = make_transfer(g, green, 2e-4), make_transfer(g, green, -2e-4)
    np.testing.assert_allclose(np.conj(Hp.data), Hm.data, atol=1e-12)


def test_propagate_dft_oracle(rng, green):
    # naive DFT + direct evaluation of exp(ikz sqrt(1 - (lambda f)^2))
    n, pitch, z = 8, 8e-6, 5e-3
    g = Grid(n, n, pitch)
    phi = rng.uniform(0, TWO_PI, (n, n))
    x = np.arange(n)
    k = np.arange(n) - n // 2
    D = np.exp(-2j * np.pi * np.outer(k, x) / n)
    f = k / (n * pitch)
    fx, fy = np.meshgrid(f, f)
    kz = TWO_PI / green.wavelength * z * np.sqrt(1 - green.wavelength**2 * (fx**2 + fy**2))
    U = D @ np.exp(1j * phi) @ D.T
    v = np.conj(D).T @ (np.exp(1j * kz) * U) @ np.conj(D) / n**2
    got = reconstruct_intensity(PhaseMap(g, phi), make_transfer(g, green, z)).values
    np.testing.assert_allclose(got, np.abs(v) ** 2, atol=1e-10)


@pytest.mark.parametrize("a,b,z", [(2, -3, 0.01), (0, 7, 0.05), (-5, 0, 1e-3)])
def test_tilted_plane_wave_stays_uniform(grid64, green, a, b, z):
    y, x = np.mgrid[0:64, 0:64]
    phi = TWO_PI * (a * x / 64 + b * y / 64)
    inten = reconstruct_intensity(PhaseMap(grid64, phi), make_transfer(grid64, green, z)).values
    np.testing.assert_allclose(inten, 1.0, atol=1e-12)


def test_identity_at_z0(rng, grid64, green):
    f = np.exp(1j * band_limited_phase(rng, 64, scale=3.0))
    out = propagate(ComplexField(grid64, f), make_transfer(grid64, green, 0.0))
    np.testing.assert_allclose(out.data, f, atol=1e-12)
    inten = reconstruct_intensity(PhaseMap(grid64, np.zeros((64, 64))), make_transfer(grid64, green, 0.0))
    np.testing.assert_allclose(inten.values, 1.0, atol=1e-14)


def test_full_band_mask_equals_unmasked(rng, grid64, green):
    u = phase_to_field(PhaseMap(grid64, rng.uniform(0, TWO_PI, (64, 64))))
    H = make_transfer(grid64, green, 0.02)
    full = SpectrumMask.full_band(grid64)
    np.testing.assert_allclose(propagate(u, H, full).data, propagate(u, H).data, atol=1e-12)


def test_energy_semigroup_inverse(rng, grid64, green):
    u = ComplexField(grid64, np.exp(1j * rng.uniform(0, TWO_PI, (64, 64))))
    H1, H2 = make_transfer(grid64, green, 0.013), make_transfer(grid64, green, 0.021)
    H12 = make_transfer(grid64, green, 0.034)
    v = propagate(u, H1)
    assert np.sum(np.abs(v.data) ** 2) == pytest.approx(64 * 64, rel=1e-10)
    np.testing.assert_allclose(propagate(v, H2).data, propagate(u, H12).data, atol=1e-9)
    np.testing.assert_allclose(propagate(v, make_transfer(grid64, green, -0.013)).data, u.data, atol=1e-9)


def test_padded_propagation(rng, grid64, green):
    phi = rng.uniform(0, TWO_PI, (64, 64))
    Hp = make_transfer(grid64, green, 0.0, pad=True)
    np.testing.assert_allclose(reconstruct_amplitude(phi, Hp), 1.0, atol=1e-12)
    with pytest.raises(ValueError):
        propagate(phase_to_field(PhaseMap(grid64, phi)), Hp, SpectrumMask(0, 0, 5))


def test_grid_mismatch(grid64, green):
    H = make_transfer(Grid(32, 32, 8e-6), green, 0.01)
    with pytest.raises(GridMismatchError):
        propagate(ComplexField(grid64, np.ones((64, 64), complex)), H)


def test_adjoint_zero_at_perfect_fit(rng, green):
    g = Grid(16, 16, 8e-6)
    H = make_transfer(g, green, 5e-3)
    phi = rng.uniform(0, TWO_PI, (16, 16))
    target = reconstruct_amplitude(phi, H)
    grad = adjoint_gradient(PhaseMap(g, phi), H, None, target, MSE)
    assert np.abs(grad).max() < 1e-10


@pytest.mark.parametrize("loss", [
    LossConfig(1, 0),
    LossConfig(0, 1, 0.0),
    LossConfig(0, 1, 1.0, detach_weight=False),
    LossConfig(1, 1, 1.0, detach_weight=False),
    LossConfig(1, 1, 1.0, scale_mode="lsq", detach_weight=False),
], ids=["mse", "ffl0", "ffl1", "mix", "mix-lsq"])
@pytest.mark.parametrize("mask", [None, SpectrumMask(1, -1, 2.5), SpectrumMask(1, -1, 2.5, "soft")],
                         ids=["nomask", "hard", "soft"])
def test_adjoint_matches_finite_differences(rng, green, loss, mask):
    g = Grid(8, 8, 8e-6)
    H = make_transfer(g, green, 2e-3)
    phi = rng.uniform(0, TWO_PI, (8, 8))
    target = rng.uniform(0, 1, (8, 8))
    grad = adjoint_gradient(PhaseMap(g, phi), H, mask, target, loss, tau=0.4)
    fd = fd_gradient(phi, H, target, loss, mask, tau=0.4)
    assert np.abs(grad - fd).max() / np.abs(fd).max() < 1e-5


def test_adjoint_invariant_to_2pi(rng, green):
    g = Grid(8, 8, 8e-6)
    H = make_transfer(g, green, 2e-3)
    phi = rng.uniform(0, TWO_PI, (8, 8))
    t = rng.uniform(0, 1, (8, 8))
    shifted = phi.copy()
    shifted[3, 4] += 4 * np.pi
    shifted[0, 0] -= 2 * np.pi
    np.testing.assert_allclose(adjoint_gradient(PhaseMap(g, shifted), H, None, t, MSE),
                               adjoint_gradient(PhaseMap(g, phi), H, None, t, MSE), atol=1e-12)


def _mask_setup(rng, green):
    g = Grid(16, 16, 8e-6)
    H = make_transfer(g, green, 3e-3)
    phi = rng.uniform(0, TWO_PI, (16, 16))
    t = rng.uniform(0, 1, (16, 16))
    return g, H, phi, t, LossConfig(1, 1, 1.0, detach_weight=False)


def test_soft_mask_gradient_matches_fd(rng, green):
    g, H, phi, t, loss = _mask_setup(rng, green)
    tau = 0.3
    mask = SpectrumMask(1.3, -0.7, 4.2, "soft")
    g_mask = evaluate(phi, H, t, loss, mask, tau=tau, need_mask_grad=True).mask_grad
    eps = 1e-4
    fd = []
    for i in range(3):
        p, m = list(mask.params), list(mask.params)
        p[i] += eps
        m[i] -= eps
        fd.append((evaluate(phi, H, t, loss, mask.with_params(p), tau=tau, need_grad=False).loss
                   - evaluate(phi, H, t, loss, mask.with_params(m), tau=tau, need_grad=False).loss) / (2 * eps))
    np.testing.assert_allclose(g_mask, fd, rtol=1e-4, atol=1e-10)


def test_hard_mask_gradient_is_straight_through(rng, green):
    # forward at the hard mask, backward through the soft Jacobian:
    # dL/dp = sum_bins dL/dM(bin) * dsoft/dp(bin), with dL/dM by per-bin differences
    g, H, phi, t, loss = _mask_setup(rng, green)
    tau = 0.3
    mask = SpectrumMask(1.0, -1.0, 4.2, "hard")
    m0 = hard_mask(mask, g)
    def L(m):
        a = reconstruct_amplitude(phi, H, m)
        return loss_and_grad(t, a, loss)[0]
    eps = 1e-6
    dl_dm = np.zeros_like(m0)
    for idx in np.ndindex(m0.shape):
        p, q = m0.copy(), m0.copy()
        p[idx] += eps
        q[idx] -= eps
        dl_dm[idx] = (L(p) - L(q)) / (2 * eps)
    expected = np.tensordot(soft_mask_jacobian(mask, g, tau), dl_dm, axes=([1, 2], [0, 1]))
    got = evaluate(phi, H, t, loss, mask, tau=tau, need_mask_grad=True).mask_grad
    np.testing.assert_allclose(got, expected, rtol=1e-6, atol=1e-12)


def test_diffraction_angle():
    w = WaveSpec(500e-9)
    assert diffraction_angle(0, 0, w) == 0
    assert diffraction_angle(0.6e6, 0.8e6, w) == pytest.approx(np.pi / 6, rel=1e-12)
    with pytest.raises(ValueError):
        diffraction_angle(1.0001 / 500e-9, 0, w)


def test_parseval_constant_phase(grid64):
    p = PhaseMap(grid64, np.full((64, 64), 1.7))
    assert phase_gradient_energy(p) == pytest.approx(0, abs=1e-20)
    assert spectral_second_moment(p) == pytest.approx(0, abs=1e-20)


@pytest.mark.parametrize("a,b", [(3, 0), (2, -5), (-7, 4)])
def test_parseval_single_mode_closed_form(a, b):
    g = Grid(32, 48, 4e-6)
    y, x = np.mgrid[0:32, 0:48]
    A = 0.8
    phi = A * np.cos(TWO_PI * (a * x / 48 + b * y / 32))
    fa, fb = a / (48 * 4e-6), b / (32 * 4e-6)
    # sum of sin^2 over a full period grid is HW/2
    closed = TWO_PI**2 * (fa**2 + fb**2) * A**2 * (32 * 48 / 2) * (4e-6) ** 2
    p = PhaseMap(g, phi)
    assert phase_gradient_energy(p) == pytest.approx(closed, rel=1e-10)
    assert spectral_second_moment(p) == pytest.approx(closed, rel=1e-10)


def test_parseval_direct_summation(rng):
    # direct O(N^4) sum over bins of (2 pi)^2 |f|^2 |Phi|^2 with an explicit DFT
    n, pitch = 12, 5e-6
    g = Grid(n, n, pitch)
    phi = band_limited_phase(rng, n, keep=0.5)
    k = np.arange(n) - n // 2
    x = np.arange(n)
    total = 0.0
    for ky in k:
        for kx in k:
            Phi = np.sum(phi * np.exp(-2j * np.pi * (kx * x[None, :] + ky * x[:, None]) / n)) / n
            total += TWO_PI**2 * ((kx / (n * pitch)) ** 2 + (ky / (n * pitch)) ** 2) * abs(Phi) ** 2
    total *= pitch**2
    assert spectral_second_moment(PhaseMap(g, phi)) == pytest.approx(total, rel=1e-10)
    assert phase_gradient_energy(PhaseMap(g, phi)) == pytest.approx(total, rel=1e-8)
