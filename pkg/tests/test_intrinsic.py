import numpy as np
import pytest
import sympy as sp

from extham import catalog
from extham.intrinsic import (MetricData, VectorFieldData, check_warp_conditions, conformal_factor, lie_metric,
                              ricci_eigen, ricci_fd)

r, t = sp.symbols("r t", positive=True)
x, y = sp.symbols("x y", real=True)
POLAR = MetricData([r, t], sp.diag(1, r ** 2))
CART = MetricData([x, y], sp.eye(2))


def test_conformal_factor_polar():
    phi, dev, z = conformal_factor(POLAR, VectorFieldData([r, 0]))
    assert phi == 2 and dev == sp.zeros(2, 2) and z
    phi, dev, z = conformal_factor(POLAR, VectorFieldData([0, 1]))
    assert phi == 0 and z
    phi, dev, z = conformal_factor(POLAR, VectorFieldData([1, 0]))
    assert not z


def test_lie_metric_symmetric():
    L = lie_metric(POLAR, VectorFieldData([r * sp.cos(t), sp.sin(t)]))
    assert sp.simplify(L - L.T) == sp.zeros(2, 2)


def _ttw_polar(a1, a2, w, h):
    return (a1 / sp.cos(h * t) ** 2 + a2 / sp.sin(h * t) ** 2) / r ** 2 + w * r ** 2


def test_warp_conditions_polar_ttw():
    V = _ttw_polar(sp.Rational(3, 10), sp.Rational(7, 10), 1, sp.Rational(3, 2))
    rep = check_warp_conditions(POLAR, VectorFieldData([r, 0]), V)
    assert rep.passed
    mut = check_warp_conditions(POLAR, VectorFieldData([r, 0]), V + r * sp.cos(t))
    failed = [k for k, v in mut.extra["conditions"].items() if not v["pass"]]
    assert failed == ["Vok"]


def test_omega_zero_potential_is_annihilated():
    V = _ttw_polar(sp.Rational(3, 10), sp.Rational(7, 10), 0, 2)
    rep = check_warp_conditions(POLAR, VectorFieldData([r, 0]), V)
    assert rep.passed and sp.simplify(sp.sympify(rep.extra["XV_plus_phiV"])) == 0


def test_conditions_covariant_polar_cartesian():
    # TTW with h = 1 in both charts: a/cos^2 / r^2 = a/x^2
    a, b, w = sp.Rational(1, 3), sp.Rational(2, 5), 1
    Vc = a / x ** 2 + b / y ** 2 + w * (x ** 2 + y ** 2)
    Vp = _ttw_polar(a, b, w, 1)
    assert sp.simplify(Vc.subs({x: r * sp.cos(t), y: r * sp.sin(t)}) - Vp) == 0
    assert check_warp_conditions(CART, VectorFieldData([x, y]), Vc, box=(0.3, 1.5)).passed
    assert check_warp_conditions(POLAR, VectorFieldData([r, 0]), Vp).passed
    bad_c = check_warp_conditions(CART, VectorFieldData([x, y]), Vc + y, box=(0.3, 1.5))
    bad_p = check_warp_conditions(POLAR, VectorFieldData([r, 0]), Vp + r * sp.sin(t))
    assert not bad_c.passed and not bad_p.passed


def test_ricci_flat_and_sphere():
    a, rep = ricci_eigen(POLAR, VectorFieldData([r, 0]))
    assert a == 0 and rep.passed
    th, ph = sp.symbols("theta phi", positive=True)
    S2 = MetricData([th, ph], sp.diag(1, sp.sin(th) ** 2))
    assert sp.simplify(S2.ricci - S2.g) == sp.zeros(2, 2)
    for X in ([1, 0], [0, 1], [sp.cos(ph), sp.sin(th)]):
        a, rep = ricci_eigen(S2, VectorFieldData(X))
        assert a == 1 and rep.passed


def test_ricci_eigen_non_constant_curvature():
    e = catalog.get("s2-ext", m=2, n=1)
    d = e.intrinsic
    R = d["metric"].ricci
    assert sp.simplify(R - R[0, 0] * d["metric"].g) != sp.zeros(3, 3)
    a, rep = ricci_eigen(d["metric"], d["X"], n=50)
    assert rep.passed and rep.extra["a_constant"]


def test_ricci_symbolic_vs_finite_differences():
    e = catalog.get("s2-cot", m=2, n=1)
    M = e.intrinsic["metric"]
    f = sp.lambdify(M.x, M.ricci, "numpy")
    rng = np.random.default_rng(3)
    for pt in rng.uniform(0.5, 1.2, size=(20, M.dim)):
        ex = np.array(f(*pt), float)
        fd = ricci_fd(M, pt)
        assert np.abs(fd - ex).max() <= 1e-5 * max(1.0, np.abs(ex).max())


@pytest.mark.parametrize("name", ["ttw", "aniso", "jacobi-calogero", "sphere", "s2-ext", "s2-cot"])
def test_catalog_entries_are_intrinsically_warped(name):
    d = catalog.get(name).intrinsic
    assert check_warp_conditions(d["metric"], d["X"], d["V"]).passed
    a, rep = ricci_eigen(d["metric"], d["X"])
    assert rep.passed


def test_metric_must_be_symmetric():
    with pytest.raises(ValueError):
        MetricData([x, y], sp.Matrix([[1, x], [0, 1]]))
    with pytest.raises(ValueError):
        ricci_eigen(POLAR, VectorFieldData([0, 0]))
