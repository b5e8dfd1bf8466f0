from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pulse_ilp import kernels
from pulse_ilp.core import GenSpec, generate_planted, make_instance, normalize_signs
from pulse_ilp.energy import (
    EPS_K,
    constraint_energy,
    evaluate,
    finite_diff_gradient,
    gradient,
    total_energy,
)


def reference_energy(c, d, x):
    """Energy by hand, term by term, in exact rationals, from the signed matrix."""
    x = [Fraction(v) for v in x]
    per = []
    for row, dm in zip(c, d):
        s = sum(abs(v) for v in row)
        target = Fraction(dm) + sum(-v for v in row if v < 0)
        lin = Fraction(0)
        pen = Fraction(0)
        for v, xi in zip(row, x):
            u = 1 - xi if v < 0 else xi
            lin += abs(v) * u
            pen += abs(v) * (u * (1 - u)) ** 2
        per.append(Fraction(1, 2) * ((target - lin) / s) ** 2 + pen / (2 * s))
    return per, sum(per) / len(per)


def test_eq1_solution_has_zero_energy(eq1):
    si = normalize_signs(eq1)
    x = [1, 0, 1, 0, 1]
    assert constraint_energy(si, 0, x) == 0.0
    assert total_energy(si, x).k_total == 0.0
    np.testing.assert_array_equal(gradient(si, x), np.zeros(5))


def test_single_variable_hand_values():
    si = normalize_signs(make_instance([[1]], [1]))
    assert constraint_energy(si, 0, [0.5]) == pytest.approx(0.15625, abs=1e-15)
    assert gradient(si, [0.5])[0] == pytest.approx(-0.5, abs=1e-15)
    assert finite_diff_gradient(si, [0.5])[0] == pytest.approx(-0.5, abs=1e-8)


def test_energy_matches_exact_reference_random_instance():
    inst, planted = generate_planted(GenSpec(3, 8, 10, 1))
    si = normalize_signs(inst)
    assert total_energy(si, planted).k_total <= EPS_K
    rng = np.random.default_rng(0)
    for _ in range(10):
        x = rng.integers(0, 2, size=8)
        per, total = reference_energy(inst.c.tolist(), inst.d.tolist(), x.tolist())
        ev = total_energy(si, x)
        np.testing.assert_allclose(ev.k_per_constraint, [float(p) for p in per], rtol=1e-13, atol=1e-16)
        assert ev.k_total == pytest.approx(float(total), rel=1e-13, abs=1e-16)


def test_energy_matches_exact_reference_with_negative_coefficients():
    rng = np.random.default_rng(7)
    c = rng.integers(-6, 7, size=(4, 6))
    c[:, 0] = -3
    d = rng.integers(-8, 9, size=4)
    si = normalize_signs(make_instance(c, d))
    for _ in range(10):
        x = rng.integers(0, 16, size=6) / 16  # dyadic: exact in float
        per, total = reference_energy(c.tolist(), d.tolist(), [Fraction(int(v * 16), 16) for v in x])
        for m in range(4):
            assert constraint_energy(si, m, x) == pytest.approx(float(per[m]), rel=1e-13, abs=1e-16)
        assert total_energy(si, x).k_total == pytest.approx(float(total), rel=1e-13, abs=1e-16)


def test_errors(eq1):
    si = normalize_signs(eq1)
    with pytest.raises(IndexError):
        constraint_energy(si, 3, np.zeros(5))
    with pytest.raises(ValueError):
        constraint_energy(si, 0, np.zeros(4))
    with pytest.raises(ValueError):
        total_energy(si, np.zeros(6))
    with pytest.raises(ValueError):
        gradient(si, np.zeros(2))
    with pytest.raises(ValueError):
        finite_diff_gradient(si, np.zeros(5), h=0)


def test_half_point_is_strictly_positive(eq1):
    si = normalize_signs(eq1)
    x = np.array([1, 0, 0.5, 0, 1.0])
    assert total_energy(si, x).k_total > 0


def test_identical_constraints_mean():
    row = [3, 1, 4, 1, 5]
    one = normalize_signs(make_instance([row], [8]))
    many = normalize_signs(make_instance([row] * 4, [8] * 4))
    x = np.array([0.2, 0.9, 0.4, 0.6, 0.1])
    assert total_energy(many, x).k_total == pytest.approx(total_energy(one, x).k_total, rel=1e-14)
    assert total_energy(one, x).k_total == pytest.approx(constraint_energy(one, 0, x), rel=1e-14)


def test_k_total_is_mean_of_components(eq1):
    si = normalize_signs(eq1)
    ev = evaluate(si, np.linspace(0.1, 0.9, 5))
    assert ev.k_total == pytest.approx(ev.k_per_constraint.mean(), rel=1e-15)
    assert ev.gradient.shape == (5,)


def _max_rel_err(a, b):
    return np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300)


@settings(max_examples=100, deadline=None)
@given(m=st.integers(1, 10), n=st.integers(1, 10), r=st.integers(1, 15), seed=st.integers(0, 2**32 - 1))
def test_gradient_matches_finite_differences(m, n, r, seed):
    inst, _ = generate_planted(GenSpec(m, n, r, seed))
    si = normalize_signs(inst)
    x = np.random.default_rng(seed).uniform(-0.2, 1.2, size=n)
    g = gradient(si, x)
    fd = finite_diff_gradient(si, x, 1e-6)
    assert _max_rel_err(g, fd) < 1e-6


def test_gradient_with_negative_coefficients_matches_finite_differences():
    rng = np.random.default_rng(11)
    for _ in range(20):
        c = rng.integers(-9, 10, size=(3, 7))
        c[:, 0] = 5
        si = normalize_signs(make_instance(c, rng.integers(-5, 20, size=3)))
        x = rng.random(7)
        assert _max_rel_err(gradient(si, x), finite_diff_gradient(si, x)) < 1e-6


def test_finite_difference_error_shrinks_quadratically():
    inst, _ = generate_planted(GenSpec(3, 6, 10, 4))
    si = normalize_signs(inst)
    x = np.random.default_rng(4).random(6)
    g = gradient(si, x)
    e1 = np.max(np.abs(finite_diff_gradient(si, x, 1e-2) - g))
    e2 = np.max(np.abs(finite_diff_gradient(si, x, 5e-3) - g))
    assert 3.0 < e1 / e2 < 5.0


def test_finite_difference_zero_at_solution(eq1):
    si = normalize_signs(eq1)
    assert np.max(np.abs(finite_diff_gradient(si, [1, 0, 1, 0, 1]))) < 1e-10


def test_energy_characterizes_solutions_by_enumeration():
    for seed in range(8):
        inst, _ = generate_planted(GenSpec(2, 10, 3, seed))
        si = normalize_signs(inst)
        xs = ((np.arange(1 << 10)[:, None] >> np.arange(10)) & 1)
        feasible = np.all(xs @ inst.c.T == inst.d, axis=1)
        k = np.array([total_energy(si, x).k_total for x in xs])
        assert np.all(k[feasible] <= EPS_K)
        assert np.all(k[~feasible] > EPS_K)
        assert np.all(k >= 0)


def test_scale_invariance_at_solution():
    inst, x = generate_planted(GenSpec(3, 7, 5, 2))
    for lam in (2, 3, 17):
        scaled = make_instance(inst.c * lam, inst.d * lam)
        si = normalize_signs(scaled)
        for m in range(3):
            assert constraint_energy(si, m, x) == 0.0
        y = np.random.default_rng(lam).random(7)
        k1 = total_energy(normalize_signs(inst), y).k_total
        assert total_energy(si, y).k_total == pytest.approx(k1, rel=1e-12)


def test_permutation_symmetry():
    inst, _ = generate_planted(GenSpec(4, 9, 10, 5))
    rng = np.random.default_rng(5)
    perm = rng.permutation(9)
    x = rng.random(9)
    g = gradient(normalize_signs(inst), x)
    gp = gradient(normalize_signs(make_instance(inst.c[:, perm], inst.d)), x[perm])
    np.testing.assert_allclose(gp, g[perm], rtol=1e-13, atol=1e-16)


def test_kernel_energy_matches_reference(backend):
    rng = np.random.default_rng(21)
    for _ in range(20):
        c = rng.integers(-7, 12, size=(4, 9))
        c[:, 3] = 2
        inst = make_instance(c, rng.integers(-3, 25, size=4))
        si = normalize_signs(inst)
        p = kernels.prepare(inst)
        x = rng.uniform(-0.3, 1.3, size=9)
        g = np.empty(9)
        k = kernels.energy_grad(p, x, g)
        assert k == pytest.approx(total_energy(si, x).k_total, rel=1e-12, abs=1e-15)
        np.testing.assert_allclose(g, gradient(si, x), rtol=1e-11, atol=1e-14)
