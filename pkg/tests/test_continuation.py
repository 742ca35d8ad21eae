import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from scatlab.continuation import (
    CompatibilityError,
    SheetCoordinate,
    WeightTriple,
    birman_schwinger,
    continued_free_resolvent,
    extrapolated_poles,
    model_kernel,
    perturbed_resolvent_via_bs,
    resonance_scan,
    square_well_resonances,
    weight_compatibility_check,
    winding_number,
)
from scatlab.decay import exponential
from scatlab.funcalc import resolvent_apply
from scatlab.operators import EndModel, GridSpec, Perturbation, build_mode_operator, perturb_operator

NU = math.sqrt(1.25)
Z_AT_MINUS_ONE = 1j * NU


def test_sheet_coordinate_round_trip():
    for lam in (2.0 + 0.5j, -3.0 + 0.1j, 0.1 - 2j):
        s = SheetCoordinate.from_lambda(lam, n=1)
        assert s.physical and abs(s.lam - lam) < 1e-12
        t = SheetCoordinate.from_lambda(lam, n=1, physical=False)
        assert not t.physical and abs(t.lam - lam) < 1e-12


def test_product_kernel_value():
    # direct evaluation: (u u')^{1/2} / nu * (1/2)^nu at u=2, u'=1
    expected = math.sqrt(2) / NU * 0.5**NU
    val = model_kernel(1, 2.0, 1.0, Z_AT_MINUS_ONE, "product")
    assert abs(val - expected) < 1e-12
    assert abs(val - 0.5827) < 5e-4


@given(u=st.floats(1.0, 50.0), re=st.floats(-3, 3), im=st.floats(0.05, 3))
def test_dirichlet_kernel_vanishes_on_boundary(u, re, im):
    assert abs(model_kernel(2, u, 1.0, complex(re, im))) < 1e-12


def test_dirichlet_kernel_against_dense_inverse():
    n, log_L = 1, 12.0
    for N in (600, 1200):
        op = build_mode_operator(EndModel.cusp(n), 0, GridSpec(math.exp(log_L), N, spacing="geometric"), "cusp_u")
        inv = np.linalg.inv(op.matrix() + np.eye(op.size))
        u = op.interior
        j = int(np.argmin(np.abs(u - 5)))
        dense = inv[:, j] / op.mass[j]
        exact = np.array([model_kernel(n, ui, u[j], Z_AT_MINUS_ONE) for ui in u])
        # away from the truncation end where the half-line kernel is not the box kernel
        keep = u < math.exp(6)
        dx = log_L / (N + 1)
        assert np.abs(dense - exact)[keep].max() / np.abs(exact).max() <= 5 * dx**2


@pytest.fixture(scope="module")
def free_op():
    return build_mode_operator(EndModel.cusp(1), 0, GridSpec(60, 1199))


@pytest.fixture(scope="module")
def well_bs(free_op):
    op_h, _ = perturb_operator(free_op, Perturbation.square_well(10.0, 1.0))
    return op_h, birman_schwinger(free_op, op_h)


def source(op):
    return np.exp(-((op.interior - 5) ** 2))


@pytest.mark.parametrize("z", [1 + 0.5j, 2 + 1j, 0.3 + 2j])
def test_physical_sheet_agreement(free_op, z):
    f = source(free_op)
    ref = resolvent_apply(free_op, 0.25 + z * z, f)
    got = continued_free_resolvent(free_op, z, f)
    assert np.abs(got - ref).max() <= 1e-8 * np.abs(ref).max()


def test_continuum_kernel_is_close(free_op):
    z = 1 + 0.5j
    f = source(free_op)
    ref = resolvent_apply(free_op, 0.25 + z * z, f)
    got = continued_free_resolvent(free_op, z, f, "continuum")
    assert np.abs(got - ref).max() <= 1e-3 * np.abs(ref).max()


def test_zero_source(free_op):
    out = continued_free_resolvent(free_op, 1 - 1j, np.zeros(free_op.size))
    assert not np.any(out)


def test_real_axis_and_origin_are_finite(free_op):
    f = source(free_op)
    for z in (1.0, 0.0, 1e-10):
        assert np.all(np.isfinite(continued_free_resolvent(free_op, z, f)))


@pytest.mark.parametrize("z", [1.5 - 0.7j, 0.4 + 0.2j, 3 - 2j])
def test_schwarz_symmetry(free_op, z):
    f = source(free_op)
    a = continued_free_resolvent(free_op, z, f)
    b = continued_free_resolvent(free_op, -np.conj(z), f)
    assert np.allclose(b, np.conj(a), atol=1e-12 * np.abs(a).max())


@pytest.mark.parametrize("z", [1 + 0.5j, 3 + 1j])
def test_birman_schwinger_reproduces_perturbed_resolvent(free_op, well_bs, z):
    op_h, bs = well_bs
    f = source(free_op)
    ref = resolvent_apply(op_h, 0.25 + z * z, f)
    got = perturbed_resolvent_via_bs(bs, free_op, z, f)
    assert np.abs(got - ref).max() <= 1e-8 * np.abs(ref).max()


def test_kernel_decays_up_the_imaginary_axis(well_bs):
    _, bs = well_bs
    norms = [np.linalg.norm(bs.block(1 + 1j * y)) for y in (1, 4, 16, 64)]
    assert all(b < a for a, b in zip(norms, norms[1:]))
    assert norms[-1] < 0.05 * norms[0]


def test_zero_perturbation_is_trivial(free_op):
    bs = birman_schwinger(free_op, free_op)
    assert bs.support.size == 0
    f = source(free_op)
    z = 1 + 1j
    assert np.array_equal(perturbed_resolvent_via_bs(bs, free_op, z, f), continued_free_resolvent(free_op, z, f))
    assert not resonance_scan(bs, (0.2, 6, -3, -0.05), (20, 20)).poles


def test_scan_rejects_origin(well_bs):
    with pytest.raises(ValueError):
        resonance_scan(well_bs[1], (-1, 1, -1, 0.5), (10, 10))


def _well_builder(h, stop=6.0):
    op0 = build_mode_operator(EndModel.cusp(1), 0, GridSpec(stop, int(round(stop / h)) - 1))
    op_h, _ = perturb_operator(op0, Perturbation.square_well(10.0, 1.0))
    return birman_schwinger(op0, op_h)


@pytest.fixture(scope="module")
def scan():
    bs = _well_builder(0.02)
    return bs, resonance_scan(bs, (0.2, 8.0, -3.0, -0.05), (60, 60))


def test_resonances_match_transcendental_oracle(scan):
    bs, rep = scan
    assert len(rep.poles) >= 2
    seeds = [q["z"] for q in rep.poles[:2]]
    zs = extrapolated_poles(_well_builder, 0.02, seeds)
    oracle = square_well_resonances(10.0, 1.0, zs)
    assert max(abs(a - b) for a, b in zip(zs, oracle)) < 1e-4


def test_pole_properties(scan):
    bs, rep = scan
    for q in rep.poles:
        assert q["min_sv"] < 1e-6
        assert q["winding"] >= 1 and q["rank"] >= 1
        assert abs(q["lam"] - (0.25 + q["z"] ** 2)) < 1e-12
        assert q["z"].imag < 0


def test_pole_pairing(scan):
    bs, rep = scan
    for q in rep.poles[:2]:
        mirror = -np.conj(q["z"])
        assert np.linalg.svd(bs.fredholm(mirror), compute_uv=False)[-1] < 1e-6
        assert winding_number(bs, mirror, 0.05) == 1


def test_square_well_oracle_pairs():
    roots = square_well_resonances(10.0, 1.0, [3.2 - 1.3j, -3.2 - 1.3j])
    assert abs(roots[1] + np.conj(roots[0])) < 1e-12


def cusp_inj(d):
    return -d


def flat_inj(d):
    return np.zeros_like(d)


@pytest.mark.parametrize("c_frac,ok", [(1 / 8, True), (0.99 / 4, True), (1.0, False)])
def test_cusp_weight_bookkeeping(c_frac, ok):
    eps = 0.4
    w = exponential(c_frac * eps)
    check = weight_compatibility_check(exponential(4 + eps), WeightTriple(w, w, w), cusp_inj, dim=2)
    assert check.passed is ok


@pytest.mark.parametrize("c_frac,ok", [(1 / 4, True), (0.99 / 2, True), (1.0, False)])
def test_cylinder_weight_bookkeeping(c_frac, ok):
    eps = 0.4
    w = exponential(c_frac * eps)
    check = weight_compatibility_check(exponential(eps), WeightTriple(w, w, w), flat_inj, dim=1)
    assert check.passed is ok
    if not ok:
        assert check.tail_slope > 0


def test_failed_compatibility_refuses(free_op, well_bs):
    w = exponential(0.4)
    bad = weight_compatibility_check(exponential(0.4), WeightTriple(w, w, w), flat_inj, dim=1)
    with pytest.raises(CompatibilityError, match="beta"):
        birman_schwinger(free_op, well_bs[0], compatibility=bad)
