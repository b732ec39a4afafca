import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from choquard_lattice import operators as ops
from choquard_lattice.errors import KernelBoundError, NumericalConsistencyError, ValidationError
from choquard_lattice.lattice import build_box
from choquard_lattice.spectral import compute_green_table

K1 = ops.build_kernel_table("power-law", 0.5, 1, 4)
K2 = ops.build_kernel_table("power-law", 0.6, 2, 5)


def test_power_law_values():
    assert K1.value(1) == 1.0
    assert K1.value(2) == pytest.approx(0.25)
    assert K1.value(-3) == pytest.approx(3.0**-2)
    assert K2.value((1, 1)) == pytest.approx(2.0 ** (-2 - 1.2))
    assert K1.value(0) == 0.0
    assert (K1.c_lo, K1.c_hi) == (1.0, 1.0)
    assert ops.check_kernel_bounds(K2).ok


def test_spectral_kernel_closed_form():
    # d = 1, s = 1/2: W(z) = 4 / (pi (4 z^2 - 1))
    k = ops.build_kernel_table("spectral", 0.5, 1, 4)
    for z in range(1, 9):
        assert k.value(z) == pytest.approx(4.0 / (math.pi * (4 * z * z - 1)), rel=1e-9)
    chk = ops.check_kernel_bounds(k)
    assert chk.ok and k.c_lo > 0 and k.c_lo <= k.value(1) <= k.c_hi


def test_spectral_kernel_2d_bounds():
    k = ops.build_kernel_table("spectral", 0.5, 2, 3)
    assert np.all(k.values[k.values != 0] > 0)
    assert ops.check_kernel_bounds(k).ok
    assert k.value((1, 2)) == pytest.approx(k.value((-2, 1)), rel=1e-12)


@pytest.mark.parametrize("s", [0.0, 1.0, -0.2, 1.5])
def test_kernel_rejects_bad_order(s):
    with pytest.raises(ValidationError):
        ops.build_kernel_table("power-law", s, 1, 2)


def test_kernel_rejects_unknown_model():
    with pytest.raises(ValidationError):
        ops.build_kernel_table("gaussian", 0.5, 1, 2)


def test_corrupted_kernel_fails_bound_check():
    vals = np.array(K1.values)
    vals[K1.radius + 1] = vals[K1.radius - 1] = -1.0
    chk = ops.check_kernel_bounds(K1.with_values(vals))
    assert not chk.ok and chk.margin < 0 and chk.worst_displacement in [(1,), (-1,)]


def test_cutoff_drops_far_pairs():
    k = ops.build_kernel_table("power-law", 0.5, 1, 4, cutoff=3)
    assert k.value(3) > 0 and k.value(4) == 0
    assert ops.check_kernel_bounds(k).ok


def test_three_site_indicator_by_hand():
    k = ops.build_kernel_table("power-law", 0.5, 1, 1)
    u = np.array([0.0, 1.0, 0.0])
    assert ops.gradient_form(u, u, k, x=(0,)) == pytest.approx(1.0)
    assert ops.gradient_length(u, k, x=(0,)) == pytest.approx(1.0)
    assert ops.gradient_length(u, k, x=(1,)) == pytest.approx(math.sqrt(0.5))


def test_constant_field_has_no_gradient(backend):
    u = np.full(K2.box.M, 3.7)
    v = np.random.default_rng(1).standard_normal(K2.box.M)
    assert np.allclose(ops.gradient_form(u, v, K2, backend=backend), 0.0, atol=1e-12)
    assert np.allclose(ops.gradient_length(u, K2, backend=backend), 0.0, atol=1e-12)
    for p in (2.0, 3.0):
        assert np.allclose(ops.p_laplacian_apply(u, K2, p, backend=backend), 0.0, atol=1e-12)


def test_gradient_form_symmetric_bilinear(rng, backend):
    M = K2.box.M
    u, v, w = rng.standard_normal((3, M))
    a, b = rng.standard_normal(2)
    f = lambda x, y: ops.gradient_form(x, y, K2, backend=backend)  # noqa: E731
    assert np.allclose(f(u, v), f(v, u), rtol=1e-12, atol=1e-12)
    assert np.allclose(f(a * u + b * w, v), a * f(u, v) + b * f(w, v), rtol=1e-10, atol=1e-10)
    assert np.all(f(u, u) >= 0)


def test_gradient_length_homogeneous(rng, backend):
    u = rng.standard_normal(K2.box.M)
    c = -2.7
    assert np.allclose(
        ops.gradient_length(c * u, K2, backend=backend), abs(c) * ops.gradient_length(u, K2, backend=backend), rtol=1e-12
    )


def test_p2_reduces_to_linear_operator(rng, backend):
    u = rng.standard_normal(K2.box.M)
    off, center = K2.box.offsets
    idx = center + off[:, None] - off[None, :]
    W = K2.flat[idx]
    linear = (W * (u[:, None] - u[None, :])).sum(axis=1)
    assert np.allclose(ops.p_laplacian_apply(u, K2, 2.0, backend=backend), linear, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("p", [2.0, 3.0, 4.0])
def test_integration_by_parts(rng, backend, p):
    for kernel in (K1, K2):
        u, phi = rng.standard_normal((2, kernel.box.M))
        lhs = float(np.dot(phi, ops.p_laplacian_apply(u, kernel, p, backend=backend)))
        g = ops.gradient_weight(ops.gradient_length(u, kernel, backend=backend), p)
        rhs = float(np.sum(g * ops.gradient_form(u, phi, kernel, backend=backend)))
        assert lhs == pytest.approx(rhs, rel=1e-10)


def test_ibp_with_u_itself_p3(rng):
    u = rng.standard_normal(K1.box.M)
    lhs = float(np.dot(u, ops.p_laplacian_apply(u, K1, 3.0)))
    assert lhs == pytest.approx(float(np.sum(ops.gradient_length(u, K1) ** 3)), rel=1e-10)


def test_gradient_weight_conventions():
    length = np.array([0.0, 2.0])
    assert ops.gradient_weight(length, 2.0).tolist() == [1.0, 1.0]
    assert ops.gradient_weight(length, 3.0).tolist() == [0.0, 2.0]
    with pytest.raises(ValidationError):
        ops.p_laplacian_apply(np.zeros(K1.box.M), K1, 1.5)


def test_sobolev_norm(rng):
    box = K2.box
    h = ops.make_potential(box, h0=0.7, a=1.0, beta=1.0)
    u = rng.standard_normal(box.M)
    for p in (2.0, 3.0):
        val = ops.sobolev_norm_p(u, K2, h, p)
        assert ops.sobolev_norm_p(np.zeros(box.M), K2, h, p) == 0
        assert ops.sobolev_norm_p(-1.5 * u, K2, h, p) == pytest.approx(1.5**p * val, rel=1e-12)
        assert 0.7 * ops.lp_norm(u, p) ** p <= val


def test_sign_parts_examples():
    u = np.array([2.0, -3.0])
    assert ops.positive_part(u).tolist() == [2.0, 0.0]
    assert ops.negative_part(u).tolist() == [0.0, -3.0]
    assert not np.any(ops.negative_part(np.abs(u)))


def test_sign_decomposition_properties(rng):
    box = build_box(1, 6)
    k = ops.build_kernel_table("power-law", 0.5, 1, 6)
    for _ in range(50):
        u = rng.standard_normal(box.M)
        up, um = ops.positive_part(u), ops.negative_part(u)
        assert np.array_equal(up + um, u)
        assert not np.any(up * um)
        assert np.all(ops.gradient_form(up, um, k) >= -1e-12)
        p = rng.uniform(2, 4)
        assert np.sum(ops.gradient_length(um, k) ** p) <= np.sum(ops.gradient_length(u, k) ** p) + 1e-12


@given(
    st.floats(-1e3, 1e3, allow_nan=False),
    st.floats(-1e3, 1e3, allow_nan=False),
    st.floats(2.0, 4.0),
)
@settings(max_examples=500, deadline=None)
def test_scalar_p_inequality(a, b, p):
    slack = float(ops.p_inequality_slack(a, b, p))
    assert slack >= -1e-12 * max(abs(a - b) ** p, 1e-300)


@pytest.fixture(scope="module")
def green_2d():
    return compute_green_table(2, 1.0, 8)


def test_convolution_identities(green_2d, backend):
    box = build_box(2, 8)
    conv = ops.GreenConvolver(green_2d, box)
    assert not np.any(conv(np.zeros(box.M)))
    out = conv(box.delta(), "direct", backend)
    expected = np.array([green_2d.value(x) for x in box.coords])
    assert np.allclose(out, expected, rtol=1e-13)
    assert np.allclose(conv.fft(box.delta()), expected, rtol=1e-12)


def test_fft_matches_direct(green_2d, rng, backend):
    box = build_box(2, 8)
    conv = ops.GreenConvolver(green_2d, box)
    for _ in range(5):
        g = rng.random(box.M)
        a, b = conv.fft(g), conv.direct(g, backend)
        assert np.max(np.abs(a - b)) <= 1e-10 * np.max(np.abs(b))
    assert ops.check_convolution(conv, g) <= 1e-10


def test_convolver_needs_covering_table(green_2d):
    with pytest.raises(ValidationError):
        ops.GreenConvolver(green_2d, build_box(2, 9))
    with pytest.raises(ValidationError):
        ops.GreenConvolver(green_2d, build_box(1, 3))
    with pytest.raises(ValidationError):
        ops.convolve_green(green_2d, np.ones(289), build_box(2, 8), method="spline")


def test_check_convolution_raises_on_disagreement(green_2d, monkeypatch):
    box = build_box(2, 4)
    conv = ops.GreenConvolver(green_2d, box)
    monkeypatch.setattr(conv, "fft", lambda g: conv.direct(g) * (1 + 1e-6))
    with pytest.raises(NumericalConsistencyError):
        ops.check_convolution(conv, np.ones(box.M))


def test_hls_ratio(green_2d, rng):
    box = build_box(2, 8)
    r = t = 2 * 2 / (2 + 1.0)
    u, v = rng.random((2, box.M))
    base = ops.hls_ratio(u, v, green_2d, box, r, t)
    assert np.isfinite(base) and base > 0
    assert ops.hls_ratio(3.0 * u, 0.2 * v, green_2d, box, r, t) == pytest.approx(base, rel=1e-10)
    delta = box.delta()
    assert ops.hls_ratio(delta, delta, green_2d, box, r, t) == pytest.approx(green_2d.value((0, 0)), rel=1e-12)
    with pytest.raises(ValidationError):
        ops.hls_ratio(u, v, green_2d, box, 2.0, 2.0)
    with pytest.raises(ValidationError):
        ops.hls_ratio(-u, v, green_2d, box, r, t)


@pytest.mark.slow
def test_hls_ratio_stable_under_box_growth():
    r = t = 4.0 / 3.0
    maxima = []
    for L in (8, 12):
        box = build_box(2, L)
        table = compute_green_table(2, 1.0, L)
        conv = ops.GreenConvolver(table, box)
        rng = np.random.default_rng(7)
        best = 0.0
        for _ in range(1000):
            u, v = rng.random((2, box.M))
            best = max(best, ops.hls_ratio(u, v, table, box, r, t, conv))
        maxima.append(best)
    assert abs(maxima[1] - maxima[0]) <= 0.05 * maxima[0]


def test_potential_properties():
    box = build_box(2, 4)
    h = ops.make_potential(box, h0=0.5, a=2.0, beta=1.5, center=(1, 0))
    assert h.check(box)
    assert np.min(h.values) == pytest.approx(0.5)
    assert h.values[box.index_of((1, 0))] == 0.5
    with pytest.raises(ValidationError):
        ops.make_potential(box, h0=0.0)
    with pytest.raises(ValidationError):
        ops.make_potential(box, a=-1.0)


@given(arrays(np.float64, 9, elements=st.floats(-100, 100)))
@settings(max_examples=100, deadline=None)
def test_p_laplacian_annihilates_constants_shift(u):
    # adding a constant never changes the p-Laplacian
    a = ops.p_laplacian_apply(u, K1, 3.0)
    b = ops.p_laplacian_apply(u + 5.0, K1, 3.0)
    assert np.allclose(a, b, rtol=1e-9, atol=1e-7)


def test_spectral_positivity_error_reports_displacement(monkeypatch):
    from choquard_lattice import spectral

    real = spectral.extrapolated_cosine_transform

    def broken(d, N, power, zmax, levels=spectral.DEFAULT_LEVELS):
        vals, ref = real(d, N, power, zmax, levels)
        vals, ref = vals.copy(), ref.copy()
        vals[3] = ref[3] = 0.5  # transform is negated: the kernel becomes -0.5 at z = 3
        return vals, ref

    monkeypatch.setattr(spectral, "extrapolated_cosine_transform", broken)
    with pytest.raises(KernelBoundError, match=r"\(-?3,\)"):
        ops.build_kernel_table("spectral", 0.5, 1, 2)
