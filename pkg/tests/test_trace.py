import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from scatlab.decay import exponential, power_law
from scatlab.funcalc import SpectralDecomposition
from scatlab.geometry import cusp, cylinder
from scatlab.operators import EndModel, GridSpec, Perturbation, build_mode_operator, perturb_operator
from scatlab.trace import (SchattenCapError, check_trace_class_hypotheses, duhamel_difference, heat_difference,
                           heat_kernel_envelope, schatten, schatten_monotonicity, spectral_trace_difference,
                           truncation_stability)


def test_schatten_zero_and_rank_one():
    rep = schatten(np.zeros((5, 5)))
    assert rep.trace_norm == 0 and rep.effective_rank == 0
    rng = np.random.default_rng(0)
    u, v = rng.standard_normal(7), rng.standard_normal(7)
    rep = schatten(np.outer(u, v))
    assert rep.trace_norm == pytest.approx(np.linalg.norm(u) * np.linalg.norm(v))
    assert rep.effective_rank == 1


def test_schatten_cap():
    with pytest.raises(SchattenCapError, match="truncate"):
        schatten(np.zeros((10, 10)), cap=5)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 12), st.integers(0, 1000))
def test_schatten_invariants(n, seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n))
    w = rng.random(n) + 0.1
    rep = schatten(A, w)
    assert np.all(rep.singular_values >= 0)
    assert np.all(np.diff(rep.singular_values) <= 1e-12)
    assert rep.hs_norm <= rep.trace_norm + 1e-12


def test_duhamel_identity_q_perturbation():
    op = build_mode_operator(EndModel.cylinder(), 1, GridSpec(10, 249))
    op_h, _ = perturb_operator(op, Perturbation(exponential(0.5), q_amp=0.1))
    direct = heat_difference(op, op_h, 1.0)
    duh = duhamel_difference(op, op_h, 1.0, 32)
    assert np.linalg.norm(direct - duh) <= 1e-8


def test_duhamel_same_operator_zero_and_guards():
    op = build_mode_operator(EndModel.cylinder(), 1, GridSpec(10, 99))
    assert np.all(duhamel_difference(op, op, 0.5) == 0)
    with pytest.raises(ValueError):
        duhamel_difference(op, op, 0.5, m=4)
    other = build_mode_operator(EndModel.cylinder(), 1, GridSpec(10, 98))
    with pytest.raises(ValueError, match="grids"):
        heat_difference(op, other, 1.0)


def test_trace_of_difference_matches_eigenvalue_sums():
    op = build_mode_operator(EndModel.cylinder(), 1, GridSpec(10, 149))
    op_h, _ = perturb_operator(op, Perturbation(power_law(2), p_amp=0.2, q_amp=0.3))
    D = heat_difference(op, op_h, 0.7)
    expected = spectral_trace_difference(SpectralDecomposition.of(op), SpectralDecomposition.of(op_h), 0.7)
    assert np.trace(D) == pytest.approx(expected, rel=1e-9, abs=1e-12)


def test_hypotheses_cylinder_examples():
    assert check_trace_class_hypotheses(power_law(2), 0, 2, cylinder(1)).passed
    rep = check_trace_class_hypotheses(power_law(1), 0, 2, cylinder(1))
    assert not rep.check_ii and not rep.passed
    assert not check_trace_class_hypotheses(power_law(2), 0.5, 1, cylinder(1)).check_i


def test_hypotheses_cusp_example():
    def beta(n):
        return exponential(n * (n + 1) / 2 + 4 * n)

    rep = check_trace_class_hypotheses(beta(1), 1, 1, cusp(1), dim=1)
    assert rep.passed
    assert rep.exponent_iii == pytest.approx(1.5)
    # with n = 2 the profile meets the n(n+1)/2 exponent but not n(n+2)/2
    rep2 = check_trace_class_hypotheses(beta(2), 1, 1, cusp(2), dim=2)
    assert rep2.check_ii and not rep2.check_iii and rep2.check_iii_alt


def test_truncation_identity_and_admissible():
    end = EndModel.cylinder()
    rows = truncation_stability(end, 1, Perturbation(), 1.0, [20, 40])
    assert all(r.trace_norm == 0 for r in rows)
    rows = truncation_stability(end, 1, Perturbation(power_law(2), q_amp=1.0), 1.0, [50, 100, 200], density=3)
    assert rows[-1].increment < 0.01
    grow = truncation_stability(end, 1, Perturbation(exponential(0.0), q_amp=0.5), 1.0, [50, 100], density=3)
    assert grow[-1].trace_norm > 1.5 * grow[0].trace_norm


def test_heat_kernel_gaussian_envelope():
    op = build_mode_operator(EndModel.cusp(1), 0, GridSpec(20, 399))
    env = heat_kernel_envelope(op, 0.5)
    assert env.c1 > 0
    assert env.c1 == pytest.approx(env.expected, rel=0.3)


def test_schatten_monotone_in_time():
    op = build_mode_operator(EndModel.cusp(1), 0, GridSpec(15, 299))
    beta = np.exp(-0.5 * op.distance)
    norms, ok = schatten_monotonicity(op, beta, 1, [0.5, 1.0, 2.0, 4.0])
    assert ok and np.all(np.isfinite(norms))
