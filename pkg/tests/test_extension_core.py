import numpy as np
import pytest
import sympy as sp

from extham import catalog
from extham.extension_core import (F_ATOM, ExtensionSpec, SeedError, SeedSystem, build_extended,
                                   check_extension_condition, check_hessian, factorized_integrals, g_closed_form,
                                   g_recursion, k_integral, kbar_expansion, kbar_indices, kbar_integral,
                                   ladder_function, ladder_residuals, momentum_degree_ray, reduce_f,
                                   substitute_f, u_apply, ve1_residual, warped_product)
from extham.phase_expr import PU, U, Chart, is_zero, momentum_degree, param, poisson
from extham.verification import Sampler, bracket_residual

q, p = Chart(1).q[0], Chart(1).p[0]
TTW = catalog.SEEDS["ttw-angular"]
TTWS = catalog.SEEDS["ttw-angular-symbolic"]


def zero(e):
    return is_zero(sp.expand(e))


# ---------------------------------------------------------------- seeds

def test_seed_validation():
    with pytest.raises(SeedError):
        SeedSystem(Chart(1), [[1]], 0, q, 0, 0)
    with pytest.raises(SeedError):
        SeedSystem(Chart(2), [[1]], 0, q, 1, 0)


def test_extension_condition_examples():
    # G = q under free motion: X_L^2 G = 0, so cL + c0 would have to vanish
    r, z = check_extension_condition(SeedSystem(Chart(1), [[1]], 0, q, 0, sp.Rational(1, 2)))
    assert z.verdict == "nonzero" and r != 0
    r, z = check_extension_condition(TTWS())
    assert z.verdict == "zero" and r == 0
    r, z = check_extension_condition(SeedSystem(Chart(1), [[1]], q ** 2 / 2, sp.sin(q), 1, 0))
    assert z.verdict == "nonzero" and z.witness


def test_hessian_examples():
    c = param("c")
    line = SeedSystem(Chart(1), [[1]], 0, sp.cos(sp.sqrt(c) * q), c, 0)
    R, z = check_hessian(line)
    assert z and sp.simplify(R[0, 0]) == 0
    ch = Chart(2)
    flat = SeedSystem(ch, sp.eye(2), 0, ch.q[0], 0, 1)
    R, z = check_hessian(flat)
    assert z and R == sp.zeros(2, 2)
    R, z = check_hessian(catalog.s2_seed())
    assert z
    R, z = check_hessian(TTW())
    assert R is None and z.verdict == "inapplicable" and not z


def test_ve1_ttw_ladder_constant():
    c1, c2, k1 = param("c1"), param("c2"), param("kappa1")
    s = SeedSystem(Chart(1), [[1]], (c1 + c2 * sp.cos(q)) / sp.sin(q) ** 2, sp.cos(q), 1, 0, k1)
    sol = sp.solve(ve1_residual(s), k1)
    assert sol == [-c2]
    assert ve1_residual(catalog.ttw_ladder_seed(c1, c2)) == 0


# ---------------------------------------------------------------- extension

def test_build_extended_cotangent_branch():
    c, c0, k = param("c"), param("c0"), sp.Rational(3, 2)
    seed = SeedSystem(Chart(1), [[1]], q ** 2, q, c, c0)
    H = build_extended(seed, ExtensionSpec(3, 2))
    expect = PU ** 2 / 2 + k ** 2 / (c * U ** 2) * seed.L + k ** 2 * c0 / (c ** 2 * U ** 2)
    assert sp.simplify(H - expect) == 0


def test_build_extended_linear_branch():
    seed = catalog.aniso_seed()
    k = 2
    # gamma = -C u; with C = 1 the sign of -k^2 gamma' L is positive
    H = build_extended(seed, ExtensionSpec(2, 1, 0, 1))
    assert sp.expand(H - (PU ** 2 / 2 + k ** 2 * (p ** 2 / 2 + q ** 2 / 2) + k ** 2 * U ** 2 / 2)) == 0
    # C = -1 gives gamma = u and flips the seed term
    H = build_extended(seed, ExtensionSpec(2, 1, 0, -1))
    assert sp.expand(H - (PU ** 2 / 2 - k ** 2 * (p ** 2 / 2 + q ** 2 / 2) + k ** 2 * U ** 2 / 2)) == 0


@pytest.mark.parametrize("m,n", [(1, 1), (3, 2), (1, 3)])
def test_build_extended_is_ttw_polar_form(m, n):
    e = catalog.ttw_extension(m, n, Omega=sp.Rational(5, 4))
    k = sp.Rational(m, n)
    assert sp.simplify(e.H - catalog.ttw2(1 / k, e.dictionary["c1"], e.dictionary["c2"], sp.Rational(5, 4))) == 0


def test_warped_product():
    seed, spec = TTWS(), ExtensionSpec(2, 3, param("Omega"))
    gam = spec.gamma(seed)
    k2 = spec.k ** 2
    H1 = PU ** 2 / 2 + k2 * seed.c0 * gam ** 2 + spec.Omega / gam ** 2
    W = warped_product([(1, H1), (-k2 * sp.diff(gam, U), seed.L)])
    assert sp.simplify(W - build_extended(seed, spec)) == 0
    r, pr, pphi = sp.symbols("r p_r p_phi")
    assert warped_product([(1, pr ** 2 / 2), (1 / r ** 2, pphi ** 2 / 2)]) == pr ** 2 / 2 + pphi ** 2 / (2 * r ** 2)
    assert warped_product([(1, pr)]) == pr
    with pytest.raises(ValueError):
        warped_product([(2, pr)])


# ---------------------------------------------------------------- recursion

def test_recursion_small_n():
    s = TTWS()
    G, XG = s.G, s.XL(s.G)
    assert g_recursion(s, 1) == G
    assert zero(g_recursion(s, 2) - 2 * G * XG)
    assert g_closed_form(s, 1) == G
    assert zero(g_closed_form(s, 2) - 2 * G * XG)
    n4 = 4 * G * XG ** 3 + 4 * G ** 3 * XG * (-2) * s.cL
    assert zero(g_closed_form(s, 4) - n4)
    assert zero(g_recursion(s, 4) - n4)


def test_recursion_rejects_zero():
    with pytest.raises(ValueError):
        g_recursion(TTW(), 0)


def test_u_apply():
    s = TTWS()
    spec = ExtensionSpec(1, 1)
    gam = spec.gamma(s)
    assert u_apply(spec, s, s.G, 0) == s.G
    assert zero(u_apply(spec, s, s.G, 1) - PU * s.G - gam * s.XL(s.G))


@pytest.mark.parametrize("m,n", [(1, 1), (2, 1), (1, 2), (3, 2)])
def test_reduced_algebra_matches_direct_route(m, n):
    s = TTW()
    spec = ExtensionSpec(m, n)
    a = k_integral(s, spec, degree=False).expr
    b = k_integral(s, spec, method="direct", degree=False).expr
    assert zero(a - b)


# ---------------------------------------------------------------- integrals

def test_k11_symbolic_involution():
    s = TTWS()
    spec = ExtensionSpec(1, 1)
    H = build_extended(s, spec)
    K = k_integral(s, spec).expr
    assert zero(poisson(H, K, Chart(1, True))).verdict == "zero"


def test_k_refuses_omega():
    with pytest.raises(ValueError, match="kbar_integral"):
        k_integral(TTW(), ExtensionSpec(1, 1, 1))


def test_kbar_reduces_to_k():
    s = TTW()
    for m, n in [(2, 1), (2, 3), (4, 1)]:
        spec = ExtensionSpec(m, n)
        assert zero(kbar_integral(s, spec, degree=False).expr - k_integral(s, spec, degree=False).expr).verdict == "zero"


def test_kbar_dispatch():
    assert kbar_indices(ExtensionSpec(2, 1)) == (2, 1)
    assert kbar_indices(ExtensionSpec(1, 1)) == (2, 2)
    assert kbar_indices(ExtensionSpec(3, 2)) == (6, 4)
    fi = kbar_integral(TTW(), ExtensionSpec(1, 1, 1), degree=False)
    assert (fi.m, fi.n) == (2, 2)
    with pytest.raises(ValueError):
        from extham.extension_core import kbar_reduced
        kbar_reduced(TTW(), 3, 1, 0)


@pytest.mark.parametrize("m,n", [(2, 1), (1, 1)])
def test_kbar_numeric_involution(m, n):
    e = catalog.ttw_extension(m, n, Omega=sp.Rational(3, 2))
    K = kbar_integral(e.seed, e.spec, degree=False).expr
    rep = bracket_residual(e.H, K, e.chart, Sampler(avoid_sin=("q1",)), n=100)
    assert rep.passed


def test_kbar_expansion():
    s = TTW()
    spec = ExtensionSpec(2, 1, param("Omega"))
    a = kbar_expansion(s, spec, 1, 1)
    b = kbar_integral(s, spec, degree=False).expr
    assert zero(a - b).verdict == "zero"
    spec = ExtensionSpec(2, 1, 0)
    gam = spec.gamma(s)
    assert zero(kbar_expansion(s, spec, 1, 1) - u_apply(ExtensionSpec(2, 1), s, s.G, 2, gam)).verdict == "zero"


def test_momentum_degree_recorded():
    ch = Chart(1, True)
    for m, n in [(1, 1), (2, 1), (1, 2)]:
        fi = k_integral(TTW(), ExtensionSpec(m, n))
        assert fi.momentum_degree == momentum_degree(fi.expr, ch)
        assert fi.momentum_degree == momentum_degree_ray(fi.expr, ch)
    # G = sin(q) p is linear in p and each U step adds one degree
    assert k_integral(TTW(), ExtensionSpec(2, 1)).momentum_degree == 3


@pytest.mark.parametrize("name", ["circle", "s2", "oscillator", "ttw-angular"])
def test_involution_other_seeds(name):
    seed = catalog.SEEDS[name]()
    C = 1 if seed.c == 0 else 0
    for m, n in [(1, 1), (2, 1), (1, 2)]:
        spec = ExtensionSpec(m, n, 0, C)
        H = build_extended(seed, spec)
        K = k_integral(seed, spec, degree=False).expr
        ang = tuple(x.name for x in seed.chart.q) if name in ("s2", "ttw-angular") else ()
        rep = bracket_residual(H, K, seed.chart.extend(), Sampler(avoid_sin=ang), n=100)
        assert rep.passed, (name, m, n, rep.stats)


# ---------------------------------------------------------------- ladder functions

def test_ladder_circle():
    s = catalog.circle_seed()
    Gp, Gm = ladder_function(s)
    assert sp.expand(Gp - (sp.cos(q) * p + sp.sin(q) * F_ATOM)) == 0
    assert sp.expand(Gm - (-sp.cos(q) * p + sp.sin(q) * F_ATOM)) == 0
    assert ladder_residuals(s) == [0, 0]
    assert reduce_f(s.XL(Gp * Gm), s) == 0


def test_ladder_sign_pinned_on_oscillator():
    # with {f, g} = f_q g_p - f_p g_q and X_L F = {F, L}:  X_L G+ = +f G+
    s = catalog.aniso_seed()
    Gp, Gm = ladder_function(s)
    assert sp.expand(Gp - (p + q * F_ATOM)) == 0
    assert reduce_f(s.XL(Gp) - F_ATOM * Gp, s) == 0
    assert reduce_f(s.XL(Gp) + F_ATOM * Gp, s) != 0


def test_ladder_ttw_with_c1():
    c1, c2 = param("c1"), param("c2")
    s = catalog.ttw_ladder_seed(c1, c2)
    assert ladder_residuals(s) == [0, 0]
    bad = SeedSystem(Chart(1), [[1]], s.V, s.G, 1, 0, c2)
    with pytest.raises(SeedError):
        ladder_function(bad)
    with pytest.raises(SeedError):
        ladder_function(TTW())


def test_factorized_product_identity():
    s = catalog.circle_seed()
    spec = ExtensionSpec(1, 1, sp.Rational(1, 2))
    fz = factorized_integrals(s, spec)
    Ap, Am = fz.A
    gam = spec.gamma(s)
    prod = Ap * Am
    expect = PU ** 2 / 2 + fz.omega ** 2 / (2 * gam ** 2) + fz.M ** 2 * gam ** 2 / 2 - fz.M * fz.omega
    assert sp.simplify(prod.re - expect) == 0 and sp.simplify(prod.im) == 0
    # C = 0: D carries no C/(c omega) addendum
    Dp, _ = fz.D
    H = build_extended(s, spec)
    assert sp.simplify(Dp.re - (fz.omega / gam ** 2 - H / fz.omega)) == 0


def test_factorized_integrals_commute():
    s = catalog.circle_seed()
    spec = ExtensionSpec(1, 1, sp.Rational(1, 2))
    fz = factorized_integrals(s, spec)
    H = build_extended(s, spec)
    ch = Chart(1, True)
    for fi in (fz.Xp, fz.Xm):
        X = substitute_f(fi.expr, s)
        rep = bracket_residual(H, X, ch, Sampler(), n=50, tol=1e-8, complex_=True)
        assert rep.passed, rep.stats
    prod = sp.expand(substitute_f(fz.product().expr(), s))
    rep = bracket_residual(H, prod, ch, Sampler(), n=50, tol=1e-8, complex_=True)
    assert rep.passed


def test_factorized_guards():
    with pytest.raises(SeedError):
        factorized_integrals(catalog.aniso_seed(), ExtensionSpec(1, 1, 1, 1))
    with pytest.raises(SeedError):
        factorized_integrals(catalog.circle_seed(), ExtensionSpec(1, 1, 0))
