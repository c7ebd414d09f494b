"""Extension of a seed Hamiltonian L and its characteristic first integrals.

Conventions: {f,g} = sum(df/dq dg/dp - df/dp dg/dq) and X_L(F) = {F, L}.

K_{m,n} and Kbar_{2s,r} are polynomials in G, X_L G, L, gamma and p_u.  They
are computed in that reduced algebra, where X_L acts as the derivation
g -> h, h -> -2(c l + c0) g, l -> 0, and substituted back at the end.  The
direct route (X_L applied to the full expressions) is available for
cross-checks.
"""
from dataclasses import dataclass, field
from math import comb, gcd
import random

import mpmath as mp
import numpy as np
import sympy as sp

from .phase_expr import Chart, PU, U, is_zero, momentum_degree, x_flow, ZeroTest
from .tagged_trig import GammaSpec, gamma
from .intrinsic import MetricData


class SeedError(ValueError):
    def __init__(self, msg, residual=None):
        super().__init__(msg)
        self.residual = residual


@dataclass
class SeedSystem:
    chart: Chart
    g: sp.Matrix                  # covariant metric g_ij(q)
    V: object
    G: object
    c: object = 1
    c0: object = 0
    c1: object = 0                # ladder constant in nabla V . nabla G - 2(cV+c0)G + c1 = 0
    name: str = ""
    notes: str = ""

    def __post_init__(self):
        self.g = sp.Matrix(self.g)
        self.V = sp.sympify(self.V)
        self.G = sp.sympify(self.G)
        self.c, self.c0, self.c1 = map(sp.sympify, (self.c, self.c0, self.c1))
        if self.c == 0 and self.c0 == 0:
            raise SeedError("(c, c0) must not both vanish")
        if self.g.shape != (self.chart.n, self.chart.n):
            raise SeedError("metric size does not match the chart")

    @property
    def ginv(self):
        return sp.simplify(self.g.inv())

    @property
    def kinetic(self):
        p = sp.Matrix(self.chart.p)
        return sp.expand((p.T * self.ginv * p)[0, 0] / 2)

    @property
    def L(self):
        return self.kinetic + self.V

    @property
    def metric(self):
        return MetricData(self.chart.q, self.g)

    def XL(self, F):
        return x_flow(self.L, F, self.chart)

    @property
    def cL(self):
        """cL + c0."""
        return self.c * self.L + self.c0


@dataclass
class ExtensionSpec:
    m: int
    n: int
    Omega: object = 0
    C: object = 0
    shift: object = 0

    def __post_init__(self):
        if self.m < 1 or self.n < 1:
            raise ValueError("m, n must be positive integers")
        self.Omega = sp.sympify(self.Omega)
        self.C = sp.sympify(self.C)

    @property
    def k(self):
        return sp.Rational(self.m, self.n)

    @property
    def reduced(self):
        return gcd(self.m, self.n) == 1

    def gamma_spec(self, c):
        return GammaSpec(c, self.C, self.shift)

    def gamma(self, seed):
        return gamma(self.gamma_spec(seed.c))


@dataclass
class FirstIntegral:
    expr: object
    route: str
    momentum_degree: int
    m: int = 0
    n: int = 0
    notes: dict = field(default_factory=dict)


# ---------------------------------------------------------------- checks

def _witness(z):
    return z.witness if z.verdict == "nonzero" else {}


def check_extension_condition(seed):
    """X_L^2(G) + 2(cL+c0)G and its zero test (witness when nonzero)."""
    r = sp.expand(seed.XL(seed.XL(seed.G)) + 2 * seed.cL * seed.G)
    z = is_zero(r)
    return r if z.verdict == "nonzero" else sp.Integer(0), z


def check_hessian(seed):
    """nabla_i nabla_j G + c G g_ij for momentum-free G."""
    if any(seed.G.has(p) for p in seed.chart.p):
        return None, ZeroTest("inapplicable", None, {"reason": "G depends on momenta"})
    M = seed.metric
    R = sp.simplify(M.hessian(seed.G) + seed.c * seed.G * seed.g)
    worst = ZeroTest("zero")
    for e in R:
        z = is_zero(e, box=(0.2, 2.8))
        if not z:
            return R, z
        if z.verdict != "zero":
            worst = z
    return R, worst


def ve1_residual(seed):
    """nabla V . nabla G - 2(cV + c0)G + c1."""
    q = seed.chart.q
    gi = seed.ginv
    dV = sp.Matrix([sp.diff(seed.V, x) for x in q])
    dG = sp.Matrix([sp.diff(seed.G, x) for x in q])
    return sp.simplify((dV.T * gi * dG)[0, 0] - 2 * (seed.c * seed.V + seed.c0) * seed.G + seed.c1)


# ---------------------------------------------------------------- extension

def build_extended(seed, spec):
    """H = p_u^2/2 - k^2 gamma' L + k^2 c0 gamma^2 + Omega/gamma^2."""
    gam = spec.gamma(seed)
    k2 = spec.k ** 2
    H = PU ** 2 / 2 - k2 * sp.diff(gam, U) * seed.L + k2 * seed.c0 * gam ** 2 + spec.Omega / gam ** 2
    return H


def extended_chart(seed):
    return seed.chart.extend()


def warped_product(h_list):
    """sum alpha^k H_k with alpha^1 = 1."""
    if not h_list:
        raise ValueError("empty product")
    if sp.sympify(h_list[0][0]) != 1:
        raise ValueError("the first warping factor must be 1")
    return sp.Add(*[sp.sympify(a) * h for a, h in h_list])


# ---------------------------------------------------------------- recursion

def g_recursion(seed, n):
    """G_1 = G, G_{j+1} = X_L(G) G_j + (1/j) G X_L(G_j)."""
    if n < 1:
        raise ValueError("n >= 1")
    G = seed.G
    XG = sp.expand(seed.XL(G))
    out = G
    for j in range(1, n):
        out = sp.expand(XG * out + sp.Rational(1, j) * G * seed.XL(out))
    return out


def g_closed_form(seed, n):
    """sum_j binom(n,2j+1) G^(2j+1) (X_L G)^(n-2j-1) (-2)^j (cL+c0)^j."""
    G, XG, cl = seed.G, seed.XL(seed.G), seed.cL
    return sp.Add(*[comb(n, 2 * j + 1) * G ** (2 * j + 1) * XG ** (n - 2 * j - 1) * (-2) ** j * cl ** j
                    for j in range((n - 1) // 2 + 1)])


def u_apply(spec, seed, F, r, gam=None):
    """U_{m,n}^r(F), U = p_u + (m/n^2) gamma X_L, applied to an extended-chart Expr."""
    gam = spec.gamma(seed) if gam is None else gam
    a = sp.Rational(spec.m, spec.n ** 2)
    for _ in range(r):
        F = sp.expand(PU * F + a * gam * seed.XL(F))
    return F


def pd_closed_form(seed, spec, r, gam=None):
    """(P_{m,n,r}, D_{m,n,r}) with U^r(G_n) = P G_n + D X_L(G_n)."""
    m, n = spec.m, spec.n
    gam = spec.gamma(seed) if gam is None else gam
    w = sp.Rational(m, n) * gam
    cl = seed.cL
    P = sp.Add(*[comb(r, 2 * j) * w ** (2 * j) * PU ** (r - 2 * j) * (-2) ** j * cl ** j for j in range(r // 2 + 1)])
    D = sp.Add(*[comb(r, 2 * j + 1) * w ** (2 * j + 1) * PU ** (r - 2 * j - 1) * (-2) ** j * cl ** j
                 for j in range((r - 1) // 2 + 1)]) / n
    return P, D


# reduced algebra -----------------------------------------------------------

_g, _h, _l, _gam = sp.symbols("g_ h_ l_ gamma_")


def _xl_red(F, c, c0):
    return sp.expand(sp.diff(F, _g) * _h - sp.diff(F, _h) * 2 * (c * _l + c0) * _g)


def _gn_red(n, c, c0):
    out = _g
    for j in range(1, n):
        out = sp.expand(_h * out + sp.Rational(1, j) * _g * _xl_red(out, c, c0))
    return out


def _u_red(F, m, n, c, c0):
    return sp.expand(PU * F + sp.Rational(m, n ** 2) * _gam * _xl_red(F, c, c0))


def _subs_red(F, seed, gam):
    return F.subs({_g: seed.G, _h: seed.XL(seed.G), _l: seed.L, _gam: gam}, simultaneous=True)


def k_reduced(seed, m, n):
    F = _gn_red(n, seed.c, seed.c0)
    for _ in range(m):
        F = _u_red(F, m, n, seed.c, seed.c0)
    return F


def kbar_reduced(seed, two_s, r, Omega):
    if two_s % 2:
        raise ValueError("first index of Kbar must be even")
    F = _gn_red(r, seed.c, seed.c0)
    for _ in range(two_s // 2):
        F = sp.expand(_u_red(_u_red(F, two_s, r, seed.c, seed.c0), two_s, r, seed.c, seed.c0)
                      + 2 * Omega / _gam ** 2 * F)
    return F


def k_integral(seed, spec, method="reduced", degree=True):
    """K_{m,n} = U_{m,n}^m(G_n), for Omega = 0."""
    if spec.Omega != 0:
        raise ValueError("K_{m,n} requires Omega = 0; use kbar_integral")
    m, n = spec.m, spec.n
    gam = spec.gamma(seed)
    if method == "reduced":
        expr = _subs_red(k_reduced(seed, m, n), seed, gam)
    else:
        expr = u_apply(spec, seed, g_recursion(seed, n), m, gam)
    fi = FirstIntegral(expr, "recursive-K", -1, m, n, {"reduced_fraction": spec.reduced})
    if degree:
        fi.momentum_degree = momentum_degree_ray(expr, seed.chart.extend())
    return fi


def kbar_indices(spec):
    """Theorem dispatch: m even -> (m, n); m odd -> (2m, 2n)."""
    return (spec.m, spec.n) if spec.m % 2 == 0 else (2 * spec.m, 2 * spec.n)


def kbar_integral(seed, spec, s=None, r=None, method="reduced", degree=True):
    """Kbar_{2s,r} = (U_{2s,r}^2 + 2 Omega/gamma^2)^s (G_r); indices from the
    theorem's even/odd dispatch unless given."""
    if s is None:
        two_s, r = kbar_indices(spec)
    else:
        two_s = 2 * s
    gam = spec.gamma(seed)
    Om = spec.Omega
    if method == "reduced":
        expr = _subs_red(kbar_reduced(seed, two_s, r, Om), seed, gam)
    else:
        sub = ExtensionSpec(two_s, r, Om, spec.C, spec.shift)
        F = g_recursion(seed, r)
        for _ in range(two_s // 2):
            F = sp.expand(u_apply(sub, seed, F, 2, gam) + 2 * Om / gam ** 2 * F)
        expr = F
    fi = FirstIntegral(expr, "recursive-Kbar", -1, two_s, r)
    if degree:
        fi.momentum_degree = momentum_degree_ray(expr, seed.chart.extend())
    return fi


def kbar_expansion(seed, spec, m, n, gam=None):
    """Kbar_{2m,n} = sum_j binom(m,j) (2 Omega/gamma^2)^j U_{2m,n}^{2(m-j)}(G_n)."""
    gam = spec.gamma(seed) if gam is None else gam
    sub = ExtensionSpec(2 * m, n, spec.Omega, spec.C, spec.shift)
    Gn = g_recursion(seed, n)
    out = 0
    powers = {0: Gn}
    F = Gn
    for j in range(1, 2 * m + 1):
        F = u_apply(sub, seed, F, 1, gam)
        powers[j] = F
    for j in range(m + 1):
        out += comb(m, j) * (2 * spec.Omega / gam ** 2) ** j * powers[2 * (m - j)]
    return sp.expand(out)


def momentum_degree_ray(expr, chart, dps=60, seed=1):
    """Top momentum degree: K(x, t p) as a polynomial in t, evaluated at a
    random point in high precision and interpolated."""
    rnd = random.Random(seed)
    syms = sorted(expr.free_symbols, key=lambda s: s.name)
    moms = set(chart.momenta)
    t = sp.Symbol("t_ray")
    point = {}
    for s in syms:
        point[s] = sp.Rational(rnd.randint(150, 950), 1000) * (1 if s not in moms else 1)
    ray = expr.subs({s: point[s] * t for s in syms if s in moms}, simultaneous=True)
    ray = ray.subs({s: point[s] for s in syms if s not in moms})
    f = sp.lambdify(t, ray, modules="mpmath")
    with mp.workdps(dps):
        bound = 40
        ts = [mp.mpf(j + 1) / 7 for j in range(bound + 1)]
        vals = [f(x) for x in ts]
        # Newton divided differences -> leading coefficient of each degree
        coef = list(vals)
        for lvl in range(1, bound + 1):
            for i in range(bound, lvl - 1, -1):
                coef[i] = (coef[i] - coef[i - 1]) / (ts[i] - ts[i - lvl])
        scale = max(abs(v) for v in vals) + 1
        deg = 0
        for j in range(bound, -1, -1):
            if abs(coef[j]) > mp.mpf(10) ** (-dps // 2) * scale:
                deg = j
                break
    return int(deg)


# ---------------------------------------------------------------- ladder

F_ATOM = sp.Symbol("f")


def ladder_function(seed, check=True):
    """G+- = +- grad(G).p + G f + c1/f with f = sqrt(-2(cL+c0)) as an atom."""
    q, p = seed.chart.q, seed.chart.p
    if any(seed.G.has(x) for x in p):
        raise SeedError("ladder functions need a momentum-free G")
    if check:
        r = ve1_residual(seed)
        z = is_zero(r)
        if not z:
            raise SeedError("VE1 residual is nonzero", r)
    gi = seed.ginv
    dG = sp.Matrix([sp.diff(seed.G, x) for x in q])
    grad_p = sp.expand((sp.Matrix(p).T * gi * dG)[0, 0])
    base = seed.G * F_ATOM + seed.c1 / F_ATOM
    return grad_p + base, -grad_p + base


def reduce_f(expr, seed):
    """Reduce a rational expression in f modulo f^2 = -2(cL+c0); returns numerator remainder."""
    num, den = sp.fraction(sp.together(sp.expand(expr)))
    num = sp.expand(num)
    rel = F_ATOM ** 2 + 2 * seed.cL
    return sp.expand(sp.rem(sp.Poly(num, F_ATOM), sp.Poly(rel, F_ATOM)).as_expr())


def ladder_residuals(seed):
    """X_L(G+-) -+ f G+-, reduced with the f^2 rule (X_L f = 0)."""
    Gp, Gm = ladder_function(seed)
    out = []
    for sgn, Gs in ((1, Gp), (-1, Gm)):
        r = seed.XL(Gs) - sgn * F_ATOM * Gs
        out.append(reduce_f(r, seed))
    return out


def f_value(seed):
    return sp.sqrt(-2 * seed.cL)


class CPair:
    """re + i im with Expr parts; i is a formal unit."""

    def __init__(self, re, im=0):
        self.re, self.im = sp.sympify(re), sp.sympify(im)

    def __mul__(self, o):
        o = o if isinstance(o, CPair) else CPair(o)
        return CPair(self.re * o.re - self.im * o.im, self.re * o.im + self.im * o.re)

    __rmul__ = __mul__

    def __add__(self, o):
        o = o if isinstance(o, CPair) else CPair(o)
        return CPair(self.re + o.re, self.im + o.im)

    def __pow__(self, k):
        re = sp.Add(*[comb(k, j) * self.re ** (k - j) * self.im ** j * (-1) ** (j // 2) for j in range(0, k + 1, 2)])
        im = sp.Add(*[comb(k, j) * self.re ** (k - j) * self.im ** j * (-1) ** (j // 2) for j in range(1, k + 1, 2)])
        return CPair(re, im)

    def conj(self):
        return CPair(self.re, -self.im)

    def expr(self):
        return self.re + sp.I * self.im


@dataclass
class Factorized:
    Xp: FirstIntegral
    Xm: FirstIntegral
    A: tuple
    D: tuple
    G: tuple
    M: object
    omega: object

    def product(self):
        """X+ X- : real first integral (even in f)."""
        return self.Xp.notes["pair"] * self.Xm.notes["pair"]


def factorized_integrals(seed, spec, H=None):
    """X+- = (G+-)^(2n) (A-+)^(2m) (D+-)^m with f kept as an atom in G+-."""
    if seed.c == 0:
        raise SeedError("factorized integrals need c != 0")
    Om = spec.Omega
    if not (Om.is_number and Om > 0) and not Om.is_positive:
        raise SeedError("factorized integrals need Omega > 0")
    m, n, k = spec.m, spec.n, spec.k
    gam = spec.gamma(seed)
    H = build_extended(seed, spec) if H is None else H
    w = sp.sqrt(2 * Om)
    M = k * sp.sqrt(2 * seed.cL)
    r2 = sp.sqrt(2)
    Ap = CPair(w / (r2 * gam) - M * gam / r2, -PU / r2)
    Am = CPair(w / (r2 * gam) - M * gam / r2, PU / r2)
    tail = w / gam ** 2 - H / w - spec.C / (seed.c * w) * (seed.c0 * k ** 2 - M ** 2 / 2)
    Dp = CPair(tail, -PU / gam)
    Dm = CPair(tail, PU / gam)
    Gp, Gm = ladder_function(seed)
    Xp = CPair(Gp ** (2 * n)) * (Am ** (2 * m)) * (Dp ** m)
    Xm = CPair(Gm ** (2 * n)) * (Ap ** (2 * m)) * (Dm ** m)
    fi = []
    for X, route in ((Xp, "factorized-plus"), (Xm, "factorized-minus")):
        fi.append(FirstIntegral(X.expr(), route, 2 * n + 2 * m + 2 * m, m, n, {"pair": X}))
    return Factorized(fi[0], fi[1], (Ap, Am), (Dp, Dm), (Gp, Gm), M, w)


def substitute_f(expr, seed):
    return expr.subs(F_ATOM, f_value(seed))
