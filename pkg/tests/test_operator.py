import time

import numpy as np
import pytest

from nonloc1d.kernels import KernelError, make_fractional_kernel, make_mixture_kernel, tail_mass
from nonloc1d.operator import (Grid1D, GridError, GridFunction, OperatorScheme, TailModel, apply_operator,
                               apply_operator_odd, derivative, discrete_operator, fit_tail, residual, stencil)
from nonloc1d.potential import PotentialSpec, potential_from_function

from conftest import half_laplacian
from oracles import arctan_layer_image, c1s, fourier_apply_gaussian, gaussian_d2, pv_apply

ARCTAN_TAIL = TailModel.algebraic(-1.0, 1.0, 2 / np.pi, -2 / np.pi, 1.0)


def arctan_fn(g):
    return GridFunction(g, 2 / np.pi * np.arctan(g.x), ARCTAN_TAIL, "odd")


def test_grid_basics():
    g = Grid1D(2.0, 0.5)
    np.testing.assert_array_equal(g.x, [-2, -1.5, -1, -0.5, 0, 0.5, 1, 1.5, 2])
    assert g.N % 2 == 1 and g.x[g.center] == 0
    for bad in [(0.5, 0.1), (2.0, 0.0), (2.0, 0.3)]:
        with pytest.raises(GridError):
            Grid1D(*bad)


def test_tail_model_invariants():
    with pytest.raises(GridError):
        TailModel("zero", 1.0)
    with pytest.raises(GridError):
        TailModel.algebraic(0, 0, 1, 1, 0.0)
    with pytest.raises(GridError):
        TailModel("weird")


def test_grid_function_symmetry_tags():
    g = Grid1D(3.0, 0.5)
    with pytest.raises(GridError):
        GridFunction(g, g.x**2, TailModel(), "odd")
    with pytest.raises(GridError):
        GridFunction(g, g.x, TailModel(), "even")
    with pytest.raises(GridError):
        GridFunction(g, g.x, TailModel.constant(1.0, 1.0), "odd")
    with pytest.raises(GridError):
        GridFunction(g, np.ones(3))


def test_csv_round_trip(tmp_path):
    g = Grid1D(3.0, 0.25)
    phi = arctan_fn(g)
    phi.to_csv(tmp_path / "u.csv")
    assert (tmp_path / "u.csv").read_text().splitlines()[0] == "x,value"
    back = GridFunction.from_csv(tmp_path / "u.csv")
    assert np.array_equal(back.values, phi.values)
    assert back.tail == phi.tail and back.symmetry == "odd" and back.grid == g


def test_scheme_delta_range():
    OperatorScheme(0.04).resolve_delta(0.01)
    with pytest.raises(GridError):
        OperatorScheme(0.05).resolve_delta(0.01)
    with pytest.raises(GridError):
        OperatorScheme(0.0).resolve_delta(0.01)


def test_constants_are_annihilated():
    g = Grid1D(10.0, 0.05)
    for k in (make_fractional_kernel(0.5, True), make_fractional_kernel(0.8), make_mixture_kernel([(0.5, 1), (0.7, 1)])):
        phi = GridFunction(g, np.full(g.N, 2.5), TailModel.constant(2.5, 2.5), "even")
        assert np.max(np.abs(apply_operator(k, phi).values)) < 1e-12


def test_arctan_layer_oracle_closed_form_is_right():
    # the closed form itself, against adaptive PV quadrature
    for x in (0.0, 0.3, 1.0, 4.0):
        ref = pv_apply(lambda y: 2 / np.pi * np.arctan(y), x, 0.5, 1 / np.pi)
        assert ref == pytest.approx(arctan_layer_image(x), abs=1e-9)


def test_arctan_layer_apply():
    g = Grid1D(40.0, 0.01)
    t = time.process_time()
    L = apply_operator(half_laplacian(), arctan_fn(g)).values
    elapsed = time.process_time() - t
    inner = np.abs(g.x) <= 20
    err = np.max(np.abs(L - arctan_layer_image(g.x))[inner])
    assert err < 1e-3
    assert err < 1e-7  # measured 2.1e-8
    assert L[g.center + 100] == pytest.approx(1 / np.pi, abs=1e-7)
    assert L[g.center] == 0.0
    assert elapsed < 60


def test_soliton_oracle():
    g = Grid1D(40.0, 0.01)
    Q = 2 / (1 + g.x**2)
    phi = GridFunction(g, Q, TailModel.algebraic(0, 0, 2, 2, 2.0), "even")
    L = apply_operator(half_laplacian(), phi).values
    inner = np.abs(g.x) <= 20
    assert np.max(np.abs(L + Q - Q**2)[inner]) < 1e-6  # measured 3.5e-7


@pytest.mark.parametrize("s", [0.5, 0.75])
def test_gaussian_pv_oracle(s):
    k = make_fractional_kernel(s, normalized=True)
    g = Grid1D(20.0, 0.01)
    L = apply_operator(k, GridFunction(g, np.exp(-g.x**2))).values
    for x0 in (0.0, 0.7, 2.0):
        ref = pv_apply(lambda y: np.exp(-y * y), x0, s, c1s(s), d2=gaussian_d2)
        assert L[g.center + int(round(x0 / g.h))] == pytest.approx(ref, rel=1e-5, abs=1e-8)


def test_convergence_order_gaussian():
    k = make_fractional_kernel(0.5, normalized=True)
    xs = np.array([0.0, 0.5, 1.0, 2.0])
    ref = np.array([fourier_apply_gaussian(x, 0.5) for x in xs])
    errs = []
    for h in (0.04, 0.02, 0.01):
        g = Grid1D(16.0, h)
        L = apply_operator(k, GridFunction(g, np.exp(-g.x**2))).values
        errs.append(np.max(np.abs(L[g.center + np.rint(xs / h).astype(int)] - ref)))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 1.0)


def test_linearity(rng):
    g = Grid1D(8.0, 0.05)
    k = make_fractional_kernel(0.65)
    a, b = 1.7, -0.4
    p = GridFunction(g, np.exp(-g.x**2) * np.cos(g.x), TailModel())
    q = GridFunction(g, np.tanh(g.x), TailModel.algebraic(-1, 1, 0.5, -0.5, 1.3))
    lhs = apply_operator(k, p * a + q * b).values
    rhs = a * apply_operator(k, p).values + b * apply_operator(k, q).values
    assert np.max(np.abs(lhs - rhs)) <= 1e-10 * np.max(np.abs(rhs))


def test_parity_preserved():
    g = Grid1D(8.0, 0.05)
    k = make_fractional_kernel(0.7)
    op = discrete_operator(k, g)
    ev = op.apply(np.exp(-g.x**2) * (1 + g.x**2), TailModel())
    od = op.apply(np.tanh(g.x), TailModel.algebraic(-1, 1, 0.3, -0.3, 1.4))
    assert np.max(np.abs(ev - ev[::-1])) < 1e-12
    assert np.max(np.abs(od + od[::-1])) < 1e-12
    assert abs(od[g.center]) < 1e-12


def test_weights_symmetric_exactly():
    g = Grid1D(5.0, 0.1)
    A = discrete_operator(make_fractional_kernel(0.6), g).matrix()
    assert np.array_equal(A, A.T)


def test_strict_interior_max_gives_positive_value():
    g = Grid1D(6.0, 0.05)
    phi = GridFunction(g, np.exp(-4 * g.x**2) - 0.5, TailModel.constant(-0.5, -0.5), "even")
    for k in (make_fractional_kernel(0.5), make_fractional_kernel(0.9)):
        assert apply_operator(k, phi).values[g.center] > 0


@pytest.mark.parametrize("s", [0.5, 0.75])
def test_odd_reduction_matches_full(s):
    k = make_fractional_kernel(s, normalized=True)
    g = Grid1D(20.0, 0.02)
    x = g.x
    funcs = [
        (x * np.exp(-x**2), TailModel()),
        (np.tanh(x), TailModel.algebraic(-1, 1, 0, 0, 1.0)),
        (2 / np.pi * np.arctan(x), ARCTAN_TAIL),
        (np.sin(x) * np.exp(-x**2 / 8), TailModel()),
        (x / (1 + x**2), TailModel.algebraic(0, 0, -1, 1, 1.0)),
        (x**3 * np.exp(-np.abs(x)), TailModel()),
        (np.arctan(3 * x) * np.exp(-x**2 / 20), TailModel()),
        (np.sign(x) * (1 - np.exp(-x**2)), TailModel.constant(-1, 1)),
        (x / np.sqrt(1 + x**2), TailModel.constant(-1, 1)),
        (np.tanh(x / 3) ** 3, TailModel.constant(-1, 1)),
    ]
    for v, tail in funcs:
        phi = GridFunction(g, v, tail, "odd")
        full = apply_operator(k, phi).values
        odd = apply_operator_odd(k, phi).values
        sel = (x > 0) & (x <= g.X - 1)
        rel = np.max(np.abs(odd[sel] - full[sel])) / np.max(np.abs(full[sel]))
        assert rel <= 1e-6


def test_odd_reduction_misc():
    k = half_laplacian()
    g = Grid1D(10.0, 0.05)
    zero = GridFunction(g, np.zeros(g.N), TailModel(), "odd")
    assert np.all(apply_operator_odd(k, zero).values == 0)
    with pytest.raises(GridError):
        apply_operator_odd(k, GridFunction(g, g.x))
    # zeroth-order coefficient at x = 1 approaches 2 * tail mass at second order
    errs = []
    for h in (0.05, 0.02, 0.01):
        op = discrete_operator(k, Grid1D(10.0, h))
        errs.append(abs(op.kappa()[int(round(1 / h))] / (2 * tail_mass(k, 1.0)) - 1))
    assert errs[-1] < 2e-5
    assert errs[0] / errs[1] > (0.05 / 0.02) ** 1.8 and errs[1] / errs[2] > 2**1.8


def test_residual_of_manufactured_and_constant():
    g = Grid1D(10.0, 0.05)
    k = make_fractional_kernel(0.6)
    w = GridFunction(g, 1 / (1 + g.x**2), TailModel.algebraic(0, 0, 1, 1, 2.0), "even")
    c = PotentialSpec(g, apply_operator(k, w).values / w.values)
    assert residual(k, c, w).sup <= 1e-10
    one = GridFunction(g, np.ones(g.N), TailModel.constant(1, 1), "even")
    cc = potential_from_function(g, np.cos)
    r = residual(k, cc, one, interval=(-2.0, 2.0))
    np.testing.assert_allclose(r.values.values, -np.cos(g.x), atol=1e-12)
    assert r.interval == (-2.0, 2.0)
    with pytest.raises(GridError):
        residual(k, PotentialSpec(Grid1D(5.0, 0.05), np.zeros(201)), one)


def test_linearized_residual_of_layer_derivative():
    g = Grid1D(40.0, 0.01)
    du = GridFunction(g, (2 / np.pi) / (1 + g.x**2), TailModel.algebraic(0, 0, 2 / np.pi, 2 / np.pi, 2.0), "even")
    c = potential_from_function(g, lambda x: np.cos(2 * np.arctan(x)))
    assert residual(half_laplacian(), c, du, interval=(-10.0, 10.0)).sup < 1e-3


def test_fit_tail_and_derivative():
    g = Grid1D(30.0, 0.05)
    v = 1 - 0.7 / np.maximum(np.abs(g.x), 1.0) ** 1.5
    t = fit_tail(g, np.where(g.x > 0, v, -v), -1.0, 1.0, 1.5)
    assert t.amp_right == pytest.approx(-0.7, rel=1e-12) and t.amp_left == pytest.approx(0.7, rel=1e-12)
    phi = GridFunction(g, np.sin(g.x / 3), TailModel())
    d = derivative(phi).values
    assert np.max(np.abs(d - np.cos(g.x / 3) / 3)) < 1e-6
    dl = derivative(arctan_fn(g))
    assert dl.symmetry == "even" and dl.tail.p == 2.0


def test_stencil_ghost_band_and_cache():
    k = make_fractional_kernel(0.5)
    g = Grid1D(4.0, 0.5)
    op = discrete_operator(k, g)
    assert op.g == 4 and op.Xe == pytest.approx(6.0)
    W, O = stencil(k, 0.5, 0.5, op.M)
    assert W[0] == 0 and np.all(W[1:] > 0) and np.all(O >= 0)

