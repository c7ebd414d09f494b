"""Quantum counterpart of the extension: the extended Schrodinger operator,
the factor operators G^, A^, D^ of the warped symmetry and finite-difference
checks of H^(X^ f_E) = E X^ f_E for one-dimensional seeds.

Operators are kept symbolic (OperatorSpec) and discretized on uniform grids.
Because X^ and the separated eigenfunctions factor into a u-part and a q-part,
the long derivative chains are applied to 1D vectors in mpmath; the final
H^ application and the residual are done on the 2D (u, q) grid in float.

Two coefficient conventions are available.  "consistent" (default) is the one
for which the chain maps eigenfunctions to eigenfunctions: mu-term of A^
equal to tau sqrt(2|c|) mu/(c u), E-term of D^ equal to E/(sqrt2 c omega),
and G^, A^ indices stepping against the sign (eps -/+ s, mu - tau s).
"literal" keeps the halved mu-term, E/(2 c omega) and stepping with the sign.
"""
from dataclasses import dataclass, field
from functools import lru_cache
from fractions import Fraction
from itertools import product
from math import comb
import csv

import mpmath as mp
import numpy as np
import sympy as sp

from .phase_expr import U, is_zero, ZeroTest
from .verification import VerificationReport, summarize

CONVENTIONS = ("consistent", "literal")


class UnsupportedBackend(NotImplementedError):
    pass


class SingularConstant(ZeroDivisionError):
    pass


class PreconditionError(ValueError):
    pass


class EigenSolveError(RuntimeError):
    pass


def c_N(N, c, hbar=1):
    """-hbar^2 c (N-1)^2 / 8; exactly zero for N = 1."""
    return -sp.sympify(hbar) ** 2 * sp.sympify(c) * (N - 1) ** 2 / 8


# ---------------------------------------------------------------- operators

@dataclass
class OperatorSpec:
    """sum_alpha coeff_alpha(x) d^alpha over the variables xs (alpha a multi-index)."""
    variables: tuple
    terms: dict
    order: int = 2           # discretization order used on grids
    name: str = ""

    def __post_init__(self):
        self.variables = tuple(self.variables)
        t = {}
        for k, v in self.terms.items():
            k = tuple(k)
            if len(k) != len(self.variables):
                raise ValueError("multi-index length does not match the variables")
            v = sp.sympify(v)
            if v != 0:
                t[k] = t.get(k, 0) + v
        self.terms = t

    @classmethod
    def identity(cls, variables, order=2):
        return cls(variables, {(0,) * len(tuple(variables)): 1}, order, "id")

    @classmethod
    def multiplication(cls, variables, f, order=2):
        return cls(variables, {(0,) * len(tuple(variables)): f}, order)

    @property
    def degree(self):
        return max((sum(k) for k in self.terms), default=0)

    def apply(self, F):
        out = 0
        for k, c in self.terms.items():
            d = F
            for x, i in zip(self.variables, k):
                if i:
                    d = sp.diff(d, x, i)
            out += c * d
        return out

    __call__ = apply

    def embed(self, variables):
        """The same operator viewed on a larger variable tuple."""
        variables = tuple(variables)
        pos = [variables.index(x) for x in self.variables]
        terms = {}
        for k, c in self.terms.items():
            kk = [0] * len(variables)
            for p, i in zip(pos, k):
                kk[p] = i
            terms[tuple(kk)] = c
        return OperatorSpec(variables, terms, self.order, self.name)

    def _common(self, other):
        if self.variables == other.variables:
            return self, other
        vs = tuple(dict.fromkeys(self.variables + other.variables))
        return self.embed(vs), other.embed(vs)

    def compose(self, other):
        """self o other, by the Leibniz rule."""
        A, B = self._common(other)
        xs = A.variables
        terms = {}
        for a, ca in A.terms.items():
            for b, cb in B.terms.items():
                # d^a (cb d^b) = sum_{g <= a} binom(a, g) d^(a-g)(cb) d^(b+g)
                for g in product(*[range(i + 1) for i in a]):
                    w = 1
                    dc = cb
                    for x, ai, gi in zip(xs, a, g):
                        w *= comb(ai, gi)
                        if ai - gi:
                            dc = sp.diff(dc, x, ai - gi)
                    if dc == 0:
                        continue
                    key = tuple(bi + gi for bi, gi in zip(b, g))
                    terms[key] = terms.get(key, 0) + w * ca * dc
        return OperatorSpec(xs, terms, max(A.order, B.order))

    __matmul__ = compose

    def __add__(self, other):
        if not isinstance(other, OperatorSpec):
            other = OperatorSpec.multiplication(self.variables, other, self.order)
        A, B = self._common(other)
        t = dict(A.terms)
        for k, v in B.terms.items():
            t[k] = t.get(k, 0) + v
        return OperatorSpec(A.variables, t, max(A.order, B.order))

    __radd__ = __add__

    def __neg__(self):
        return OperatorSpec(self.variables, {k: -v for k, v in self.terms.items()}, self.order)

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, f):
        return OperatorSpec(self.variables, {k: f * v for k, v in self.terms.items()}, self.order)

    __rmul__ = __mul__

    def simplified(self):
        return OperatorSpec(self.variables, {k: sp.simplify(v) for k, v in self.terms.items()}, self.order, self.name)

    def equals(self, other, box=(0.3, 2.5), **kw):
        """Coefficient-wise zero test of self - other."""
        D = self - other
        worst = ZeroTest("zero")
        for k, v in D.terms.items():
            z = is_zero(sp.expand(v), box=box, **kw)
            if not z:
                z.witness = dict(z.witness or {}, multi_index=k)
                return z
            if z.verdict != "zero":
                worst = z
        return worst

    def classical_symbol(self, momenta, hbar):
        """Replace d_x by (i/hbar) p_x and return the hbar -> 0 limit."""
        s = 0
        for k, c in self.terms.items():
            m = c
            for p, i in zip(momenta, k):
                m *= (sp.I * p / hbar) ** i
            s += m
        return sp.limit(sp.expand(s), hbar, 0)


def laplace_beltrami(g, coords):
    """Delta = |g|^(-1/2) d_i (|g|^(1/2) g^ij d_j) as an OperatorSpec."""
    g = sp.Matrix(g)
    xs = tuple(coords)
    n = len(xs)
    gi = sp.simplify(g.inv())
    sq = sp.sqrt(sp.simplify(g.det()))
    terms = {}
    for i in range(n):
        for j in range(n):
            key = [0] * n
            key[i] += 1
            key[j] += 1
            terms[tuple(key)] = terms.get(tuple(key), 0) + gi[i, j]
        key = [0] * n
        key[i] = 1
        first = sp.simplify(sum(sp.diff(sq * gi[i, j], xs[j]) for j in range(n)) / sq)
        terms[tuple(key)] = terms.get(tuple(key), 0) + first
    return OperatorSpec(xs, terms, name="laplace-beltrami")


def build_L_hat(seed, hbar=1):
    """L^ = -(hbar^2/2) Delta + V on the seed manifold (N = 1 only)."""
    if seed.chart.n != 1:
        raise UnsupportedBackend("the grid backend handles one-dimensional seeds only")
    lap = laplace_beltrami(seed.g, seed.chart.q)
    op = -sp.sympify(hbar) ** 2 / 2 * lap + seed.V
    op.name = "L_hat"
    return op


def build_H_hat(seed, spec, hbar=1, omega=1):
    """-(hbar^2/2)(d_uu + (N/u) d_u) + k^2/(c u^2) L^ + (omega^2/2) c^2 u^2 + c_N (k^2+1)/(c u^2)."""
    c = sp.sympify(seed.c)
    if c == 0:
        raise UnsupportedBackend("the quantum extension needs c != 0")
    if sp.sympify(spec.C) != 0:
        raise UnsupportedBackend("the quantum extension is restricted to C = 0")
    if seed.c0 != 0:
        raise UnsupportedBackend("the quantum extension needs c0 = 0")
    N = seed.chart.n
    L = build_L_hat(seed, hbar)
    k2 = spec.k ** 2
    xs = (U,) + tuple(seed.chart.q)
    hb = sp.sympify(hbar)
    radial = OperatorSpec((U,), {(2,): -hb ** 2 / 2, (1,): -hb ** 2 * N / (2 * U)})
    pot = sp.sympify(omega) ** 2 / 2 * c ** 2 * U ** 2 + c_N(N, c, hbar) * (k2 + 1) / (c * U ** 2)
    H = radial.embed(xs) + (k2 / (c * U ** 2)) * L.embed(xs) + pot
    H.name = "H_hat"
    return H


def h_M(M, N=1, c=1, hbar=1, omega=1):
    """Radial operator acting on phi when H^ acts on phi psi_lambda, M = k^2 (lambda + c_N)."""
    hb, c = sp.sympify(hbar), sp.sympify(c)
    cn = c_N(N, c, hbar)
    return OperatorSpec((U,), {(2,): -hb ** 2 / 2, (1,): -hb ** 2 * N / (2 * U),
                               (0,): (M + cn) / (c * U ** 2) + sp.sympify(omega) ** 2 / 2 * c ** 2 * U ** 2}, name="H_M")


def _check_convention(convention):
    if convention not in CONVENTIONS:
        raise ValueError(f"convention must be one of {CONVENTIONS}")


def ghat(seed, eps, sign=1, hbar=1, a=1):
    """a nabla^i G nabla_i + a1 G + a2 with the constants fixed by eps and the ladder constant c1."""
    if any(seed.G.has(p) for p in seed.chart.p):
        raise PreconditionError("G must not depend on the momenta")
    c = sp.sympify(seed.c)
    if c == 0:
        raise PreconditionError("c must be nonzero")
    N = seed.chart.n
    hb, eps, a = sp.sympify(hbar), sp.sympify(eps), sp.sympify(a)
    r = sp.sqrt(2 * abs(c))
    a1 = a * (c * (1 - N) / 2 + sign * eps * r / hb)
    den = sp.simplify(-c * hb ** 2 + sign * 2 * hb * eps * r)
    if den == 0:
        raise SingularConstant(f"a2 denominator vanishes at eps={eps}")
    a2 = -2 * seed.c1 * a / den
    xs = tuple(seed.chart.q)
    gi = seed.ginv
    terms = {}
    for i in range(N):
        key = [0] * N
        key[i] = 1
        terms[tuple(key)] = a * sum(gi[i, j] * sp.diff(seed.G, xs[j]) for j in range(N))
    terms[(0,) * N] = a1 * seed.G + a2
    return OperatorSpec(xs, terms, name=f"G{'+' if sign > 0 else '-'}")


def _chain(ops):
    """ops[-1] o ... o ops[0]."""
    out = ops[0]
    for op in ops[1:]:
        out = op @ out
    return out


def ghat_factors(seed, eps, sign, n, hbar=1, a=1, convention="consistent"):
    _check_convention(convention)
    s = sp.sqrt(abs(sp.sympify(seed.c)) / 2) * sp.sympify(hbar)
    step = -sign * s if convention == "consistent" else sign * s
    return [ghat(seed, sp.sympify(eps) + j * step, sign, hbar, a) for j in range(n)]


def ghat_power(seed, eps, sign, n, hbar=1, a=1, convention="consistent"):
    return _chain(ghat_factors(seed, eps, sign, n, hbar, a, convention))


def ahat(sigma, tau, mu, omega=1, c=1, N=1, hbar=1, convention="consistent"):
    """d_u + (1/hbar)[sigma omega c u + (hbar c (N-1) + f tau sqrt(2|c|) mu)/(2 c u)], f = 2 or 1."""
    _check_convention(convention)
    c, hb = sp.sympify(c), sp.sympify(hbar)
    if c == 0:
        raise PreconditionError("c must be nonzero")
    f = 2 if convention == "consistent" else 1
    coef = (sigma * sp.sympify(omega) * c * U + (hb * c * (N - 1) + f * tau * sp.sqrt(2 * abs(c)) * mu) / (2 * c * U)) / hb
    return OperatorSpec((U,), {(1,): 1, (0,): coef}, name="A")


def ahat_factors(sigma, tau, mu, m, omega=1, c=1, N=1, hbar=1, convention="consistent"):
    _check_convention(convention)
    s = sp.sqrt(abs(sp.sympify(c)) / 2) * sp.sympify(hbar)
    step = -tau * s if convention == "consistent" else tau * s
    return [ahat(sigma, tau, sp.sympify(mu) + j * step, omega, c, N, hbar, convention) for j in range(m)]


def ahat_power(sigma, tau, mu, m, omega=1, c=1, N=1, hbar=1, convention="consistent"):
    return _chain(ahat_factors(sigma, tau, mu, m, omega, c, N, hbar, convention))


def dhat(E, sign=1, omega=1, c=1, N=1, hbar=1, convention="consistent"):
    """(hbar/sqrt2) u d_u + hbar (N+1)/(2 sqrt2) +/- (e E - omega c u^2/sqrt2)."""
    _check_convention(convention)
    omega, c, hb = sp.sympify(omega), sp.sympify(c), sp.sympify(hbar)
    if omega == 0:
        raise ValueError("omega must be nonzero in D^")
    if c == 0:
        raise PreconditionError("c must be nonzero")
    e = 1 / (sp.sqrt(2) * c * omega) if convention == "consistent" else 1 / (2 * c * omega)
    r2 = sp.sqrt(2)
    return OperatorSpec((U,), {(1,): hb / r2 * U,
                               (0,): hb * (N + 1) / (2 * r2) + sign * (e * sp.sympify(E) - omega * c * U ** 2 / r2)},
                        name="D")


def dhat_factors(E, sign, m, omega=1, c=1, N=1, hbar=1, convention="consistent"):
    delta = sp.sympify(hbar) * sp.sympify(c) * sp.sympify(omega)
    return [dhat(sp.sympify(E) + sign * 2 * j * delta, sign, omega, c, N, hbar, convention) for j in range(m)]


def dhat_power(E, sign, m, omega=1, c=1, N=1, hbar=1, convention="consistent"):
    return _chain(dhat_factors(E, sign, m, omega, c, N, hbar, convention))


def warped_factors(seed, spec, eps, E, hbar=1, omega=1, convention="consistent"):
    """(u-factors, q-factors) of X^ = (G+_eps)^(2n) o (A^{1,1}_{k eps})^(2m) o (D+_E)^m, rightmost first."""
    m, n = spec.m, spec.n
    N, c = seed.chart.n, seed.c
    us = dhat_factors(E, 1, m, omega, c, N, hbar, convention) + \
        ahat_factors(1, 1, spec.k * sp.sympify(eps), 2 * m, omega, c, N, hbar, convention)
    qs = ghat_factors(seed, eps, 1, 2 * n, hbar, 1, convention)
    return us, qs


def warped_symmetry_operator(seed, spec, eps, E, hbar=1, omega=1, convention="consistent"):
    us, qs = warped_factors(seed, spec, eps, E, hbar, omega, convention)
    xs = (U,) + tuple(seed.chart.q)
    return _chain([o.embed(xs) for o in us + qs])


# ---------------------------------------------------------------- grids

@lru_cache(maxsize=None)
def _weights(d, offsets, x0):
    w = sp.finite_diff_weights(d, list(offsets), x0)[d][-1]
    return tuple(Fraction(int(v.p), int(v.q)) for v in w)


class Stencil:
    """Rows of finite-difference weights for the d-th derivative on n uniform
    nodes.  Periodic, or one-sided near the ends; pad=1 adds zero Dirichlet
    nodes outside the grid."""

    def __init__(self, n, h, d, order=2, periodic=False, pad=0):
        self.n, self.d, self.order = n, d, order
        self.h = h
        if d == 0:
            self.idx = np.arange(n)[:, None]
            self.W = [[Fraction(1)] for _ in range(n)]
        else:
            w = 2 * ((d + 1) // 2) - 1 + order
            r = w // 2
            if periodic:
                wt = _weights(d, tuple(range(-r, r + 1)), 0)
                self.idx = (np.arange(n)[:, None] + np.arange(-r, r + 1)) % n
                self.W = [list(wt) for _ in range(n)]
            else:
                NB = n + 2 * pad
                width = max(d + order, w)
                idx, W = [], []
                for i in range(pad, pad + n):
                    if i - r >= 0 and i + r < NB:
                        pts = list(range(i - r, i + r + 1))
                    else:
                        st = min(max(i - width // 2, 0), NB - width)
                        pts = list(range(st, st + width))
                    wt = list(_weights(d, tuple(p - i for p in pts), 0))
                    # drop the Dirichlet nodes, whose values are zero
                    keep = [(p - pad, x) for p, x in zip(pts, wt) if pad <= p < pad + n]
                    keep += [(0, Fraction(0))] * (width - len(keep))
                    idx.append([p for p, _ in keep])
                    W.append([x for _, x in keep])
                self.idx = np.array(idx)
                self.W = W
        self.Wf = np.array([[float(x) for x in row] for row in self.W])

    def apply_mp(self, v):
        """Exact rational weights, arithmetic at the current mpmath precision."""
        key = mp.mp.prec
        if getattr(self, "_wm_prec", None) != key:
            self._wm = np.array([[mp.mpf(x.numerator) / x.denominator for x in row] for row in self.W], dtype=object)
            self._wm_prec = key
        v = np.asarray(v, dtype=object)
        return (self._wm * v[self.idx]).sum(axis=1) / mp.mpf(self.h) ** self.d

    def apply(self, F, axis=0):
        F = np.moveaxis(np.asarray(F), axis, 0)
        out = np.einsum("iw,iw...->i...", self.Wf, F[self.idx]) / float(self.h) ** self.d
        return np.moveaxis(out, 0, axis)

    def dense(self):
        D = np.zeros((self.n, self.n))
        for i in range(self.n):
            for w, j in zip(self.Wf[i], self.idx[i]):
                D[i, j] += w
        return D / float(self.h) ** self.d


@dataclass
class Axis:
    """Uniform nodes on (lo, hi): periodic (lo included, hi excluded) or
    Dirichlet (both ends excluded)."""
    lo: object
    hi: object
    n: int
    periodic: bool = False

    @property
    def h(self):
        lo, hi = mp.mpf(self.lo), mp.mpf(self.hi)
        return (hi - lo) / (self.n if self.periodic else self.n + 1)

    def nodes_mp(self):
        lo, h = mp.mpf(self.lo), self.h
        off = 0 if self.periodic else 1
        return np.array([lo + (i + off) * h for i in range(self.n)], dtype=object)

    def nodes(self):
        return np.array([float(x) for x in self.nodes_mp()])

    def interior(self, frac=0.8):
        if self.periodic:
            return slice(0, self.n)
        cut = int(round(self.n * (1 - frac) / 2))
        return slice(cut, self.n - cut)


@dataclass
class GridSpec:
    nu: int = 512
    nq: int = 512
    u_max: float = 8.0
    q_range: tuple = (0, "2*pi")
    periodic_q: bool = True
    order: int = 2
    interior: float = 0.8
    dps: int = 40

    def axes(self):
        lo, hi = (mp.mpf(sp.N(sp.sympify(x), self.dps + 5)) for x in self.q_range)
        return Axis(0, self.u_max, self.nu, False), Axis(lo, hi, self.nq, self.periodic_q)


@dataclass
class GridFunction:
    values: np.ndarray
    u: np.ndarray
    q: np.ndarray
    boundary: str = "dirichlet-u"

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise ValueError("grid function has non-finite values")

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["u", "q", "re", "im"])
            for i, u in enumerate(self.u):
                for j, q in enumerate(self.q):
                    v = complex(self.values[i, j])
                    w.writerow([f"{u:.12g}", f"{q:.12g}", f"{v.real:.12g}", f"{v.imag:.12g}"])


class GridOperator1D:
    """A one-variable OperatorSpec discretized on an Axis."""

    def __init__(self, op, axis, order=2, pad=0):
        if len(op.variables) != 1:
            raise ValueError("expected a one-variable operator")
        self.op, self.axis = op, axis
        x = op.variables[0]
        nodes = axis.nodes_mp()
        self.parts = []
        for (d,), coef in sorted(op.terms.items()):
            f = sp.lambdify(x, coef, "mpmath")
            cm = np.array([mp.mpmathify(f(t)) for t in nodes], dtype=object)
            S = Stencil(axis.n, axis.h, d, order, axis.periodic, pad)
            self.parts.append((cm, S))

    def apply_mp(self, v):
        out = 0
        for cm, S in self.parts:
            out = out + cm * S.apply_mp(v)
        return out

    def dense(self):
        A = 0
        for cm, S in self.parts:
            cf = np.array([complex(x) for x in cm])
            if np.all(cf.imag == 0):
                cf = cf.real
            A = A + cf[:, None] * S.dense()
        return A


def _mpvec(a):
    return np.array([mp.mpf(float(t)) for t in a], dtype=object)


def _to_float(v):
    out = np.array([complex(x) for x in v])
    return out.real if np.all(out.imag == 0) else out


def eigenpair(G, index, dps=40, sweeps=12, inner=10):
    """index-th eigenpair (by real part) of a GridOperator1D: float64 eigensolve,
    then inverse iteration with a float64 LU and mpmath residuals."""
    import scipy.linalg as sl
    A = G.dense()
    ev, V = np.linalg.eig(A)
    order = np.argsort(ev.real)
    if index >= len(order):
        raise EigenSolveError("eigen index out of range")
    E0 = ev[order[index]]
    if abs(E0.imag) > 1e-8 * max(1.0, abs(E0)):
        raise EigenSolveError(f"complex eigenvalue {E0}")
    E0 = E0.real
    gap = np.min(np.abs(np.delete(ev.real, order[index]) - E0)) if len(ev) > 1 else 1.0
    x = V[:, order[index]].real
    with mp.workdps(dps):
        # degenerate eigenvalues (gap ~ 0) keep the iterate inside the eigenspace
        spread = gap if gap > 1e-6 * max(1.0, abs(E0)) else 1.0
        sigma = E0 + 1e-6 * spread
        B = A - sigma * np.eye(len(x))
        lu = sl.lu_factor(B)
        sig = mp.mpf(sigma)
        xm = _mpvec(x)
        tol = mp.mpf(10) ** (-dps + 5)
        for _ in range(sweeps):
            # solve (A - sigma) y = x to working precision by iterative refinement
            y = _mpvec(sl.lu_solve(lu, _to_float(xm)))
            for _ in range(inner):
                r = xm - (G.apply_mp(y) - sig * y)
                corr = sl.lu_solve(lu, _to_float(r))
                y = y + _mpvec(corr)
                if max(abs(t) for t in r) < tol * max(abs(t) for t in xm):
                    break
            scale = max(y, key=abs)
            y = y / scale
            change = max(abs(a - b) for a, b in zip(y, xm))
            xm = y
            if change < tol:
                break
        Ax = G.apply_mp(xm)
        E = mp.fsum(a * b for a, b in zip(xm, Ax)) / mp.fsum(a * a for a in xm)
        res = max(abs(a - E * b) for a, b in zip(Ax, xm)) / max(abs(t) for t in xm)
    return xm, E, float(res)


# ---------------------------------------------------------------- warped symmetry

def _mpf_sym(x, dps):
    return sp.Float(x, dps)


def _residual_pieces(seed, spec, hbar, omega, lam_index, j, grid, convention, trial):
    if grid.order not in (2, 4):
        raise ValueError("discretization order must be 2 or 4")
    au, aq = grid.axes()
    dps = grid.dps
    with mp.workdps(dps):
        L = build_L_hat(seed, hbar)
        H = build_H_hat(seed, spec, hbar, omega)
        Lg = GridOperator1D(L, aq, grid.order, pad=0 if aq.periodic else 1)
        psi, lam, lam_res = eigenpair(Lg, lam_index, dps)
        cn = c_N(seed.chart.n, seed.c, hbar)
        shifted = lam + mp.mpf(sp.N(cn, dps))
        if float(seed.c) * shifted < -1e-30:
            raise PreconditionError(f"c(lambda + c_N) < 0 for lambda = {mp.nstr(lam, 12)}")
        eps = mp.sqrt(abs(shifted))
        M = mp.mpf(sp.N(spec.k ** 2, dps)) * shifted
        HM = GridOperator1D(h_M(_mpf_sym(M, dps), seed.chart.n, seed.c, hbar, omega), au, grid.order, pad=1)
        phi, E, E_res = eigenpair(HM, j, dps)
        if trial == "non-eigen":
            # a smooth radial profile that is not an eigenfunction of H^M
            nodes = au.nodes_mp()
            phi = np.array([t * mp.exp(-t * t) * (1 + t) for t in nodes], dtype=object)
        us, qs = warped_factors(seed, spec, _mpf_sym(eps, dps), _mpf_sym(E, dps), hbar, omega, convention)
        Fu = phi
        for op in us:
            Fu = GridOperator1D(op, au, grid.order).apply_mp(Fu)
        Tq = psi
        for op in qs:
            Tq = GridOperator1D(op, aq, grid.order).apply_mp(Tq)
    return dict(H=H, axes=(au, aq), Fu=_to_float(Fu), Tq=_to_float(Tq), lam=lam, eps=eps, M=M, E=E,
                eig_residuals=(lam_res, E_res))


def apply_on_grid(op, F, axes, order=2):
    """Apply a (u, q) OperatorSpec to a 2D array, stencils axis-wise."""
    au, aq = axes
    u, q = au.nodes(), aq.nodes()
    UU, QQ = np.meshgrid(u, q, indexing="ij")
    out = np.zeros(F.shape, dtype=complex)
    for (i, k), coef in op.terms.items():
        D = F
        if i:
            D = Stencil(au.n, au.h, i, order, au.periodic).apply(D, 0)
        if k:
            D = Stencil(aq.n, aq.h, k, order, aq.periodic).apply(D, 1)
        cf = sp.lambdify(op.variables, coef, "numpy")(UU, QQ)
        out = out + np.broadcast_to(cf, F.shape) * D
    return out


def warped_symmetry_residual(seed, spec, hbar=1, omega=1, mode=(0, 0), grid=None, tol=1e-4,
                             convention="consistent", trial="eigen", dump=None):
    """||H^(X^ f_E) - E X^ f_E|| / ||X^ f_E|| on the interior of the grid.

    mode = (index of lambda in the L^ spectrum, index of E in the H^M spectrum).
    trial="non-eigen" swaps the radial eigenfunction for a generic profile."""
    grid = grid or GridSpec()
    if seed.chart.n != 1:
        raise UnsupportedBackend("the grid backend handles one-dimensional seeds only")
    p = _residual_pieces(seed, spec, hbar, omega, mode[0], mode[1], grid, convention, trial)
    au, aq = p["axes"]
    F = np.outer(p["Fu"], p["Tq"])
    HF = apply_on_grid(p["H"], F, (au, aq), grid.order)
    R = HF - float(p["E"]) * F
    iu, iq = au.interior(grid.interior), aq.interior(grid.interior)
    nF = np.linalg.norm(F[iu, iq])
    if nF == 0 or not np.isfinite(nF):
        raise EigenSolveError("X^ f_E vanishes on the grid")
    res = float(np.linalg.norm(R[iu, iq]) / nF)
    if dump:
        GridFunction(F, au.nodes(), aq.nodes()).to_csv(dump)
    params = {"m": spec.m, "n": spec.n, "hbar": str(hbar), "omega": str(omega), "mode": list(mode),
              "nu": grid.nu, "nq": grid.nq, "order": grid.order, "convention": convention, "trial": trial}
    extra = {"lambda": float(p["lam"]), "eps": float(p["eps"]), "M": float(p["M"]), "E": float(p["E"]),
             "eigen_residuals": list(p["eig_residuals"]), "factors": {"G": 2 * spec.n, "A": 2 * spec.m, "D": spec.m}}
    return VerificationReport("warped-symmetry", F[iu, iq].size, {"max": res, "mean": res, "rms": res}, tol,
                              "pass" if res < tol else "fail", [] if res < tol else [{"residual": res}], params, extra)


def refinement_study(seed, spec, hbar=1, omega=1, mode=(0, 0), sizes=(64, 128, 256, 512), order=2,
                     band=(3.5, 4.5), grid=None, convention="consistent"):
    """Residuals over successive grid doublings and their ratios."""
    base = grid or GridSpec()
    res = []
    for n in sizes:
        g = GridSpec(n, n, base.u_max, base.q_range, base.periodic_q, order, base.interior, base.dps)
        res.append(warped_symmetry_residual(seed, spec, hbar, omega, mode, g, convention=convention).stats["max"])
    ratios = [a / b for a, b in zip(res, res[1:])]
    ok = all(band[0] <= r <= band[1] for r in ratios)
    return VerificationReport("refinement", len(sizes), summarize(res), band[1], "pass" if ok else "fail",
                              [] if ok else [{"ratios": ratios}],
                              {"m": spec.m, "n": spec.n, "order": order, "mode": list(mode), "sizes": list(sizes)},
                              {"residuals": res, "ratios": ratios, "band": list(band)})


def circle_mode_index(ell):
    """Position of |ell| in the sorted spectrum of -d^2/2 on the circle (pairs +/- ell)."""
    return 0 if ell == 0 else 2 * abs(ell) - 1


def lowest_admissible_modes(spec, count=2):
    """(lambda index, E index) for the circle seed: ell = 2n, 2n+1, ... with j = 0,
    so the 2n lowering steps of G^ stay at ell >= 0."""
    return [(circle_mode_index(2 * spec.n + i), 0) for i in range(count)]


def ghat_leakage(seed, ell, n=1024, order=4, sign=1, eps=None, hbar=1, convention="consistent"):
    """Apply G^ to a grid eigenfunction psi_ell of L^ on the circle and measure,
    by FFT, the fraction of energy outside the modes +/-(ell-1) and +/-(ell+1)
    (whichever dominates)."""
    axis = Axis(0, 2 * mp.pi, n, True)
    L = build_L_hat(seed, hbar)
    Lg = GridOperator1D(L, axis, order)
    ev, V = np.linalg.eigh(Lg.dense())
    i = circle_mode_index(ell)
    lam = ev[i]
    psi = V[:, i]
    if eps is None:
        eps = np.sqrt(abs(lam))
    G = ghat(seed, sp.Float(eps, 20), sign, hbar)
    out = GridOperator1D(G, axis, order).apply_mp(_mpvec(psi))
    spec_ = np.abs(np.fft.fft(_to_float(out))) ** 2
    freqs = np.rint(np.fft.fftfreq(n, 1.0 / n)).astype(int)
    total = spec_.sum()
    down = spec_[np.abs(freqs) == abs(ell) - 1].sum()
    up = spec_[np.abs(freqs) == abs(ell) + 1].sum()
    target = abs(ell) - 1 if down >= up else abs(ell) + 1
    leak = float(spec_[np.abs(freqs) != target].sum() / total)
    return {"ell": ell, "lambda": float(lam), "eps": float(eps), "target": target,
            "direction": "lowering" if target < abs(ell) else "raising", "leakage": leak,
            "lambda_bar": float(hbar) ** 2 * target ** 2 / 2}


# ---------------------------------------------------------------- classification

@dataclass
class Classification:
    kind: str                 # "shift", "ladder" or "symmetry"
    parameter: float          # M-bar (shift) or lambda-bar (ladder)
    offset: float = 0.0       # eigenvalue offset eta in S H_M = (H_Mbar + eta) S
    residual: float = 0.0
    details: dict = field(default_factory=dict)


def _default_tests():
    return [U ** a * sp.exp(-U ** 2 / 2) for a in (2, 3, 5)]


def shift_ladder_classify(op, H_M=None, M=None, tests=None, points=None, tol=1e-8, eigen=None):
    """Classify an operator against a family H_M.

    Family mode (H_M callable, M given): fit S H_M f = (H_Mbar + eta) S f for
    (Mbar, eta) by least squares over test functions and sample points; the
    family is assumed affine in M.  op may be an OperatorSpec or a callable of M.
    Eigen mode (eigen=(apply_H, psi, lam) on a grid, op a callable on arrays):
    lambda-bar from the Rayleigh quotient of H on op(psi)."""
    if eigen is not None:
        return ladder_classify(op, *eigen, tol=tol)
    S = op(M) if callable(op) and not isinstance(op, OperatorSpec) else op
    tests = tests or _default_tests()
    pts = points if points is not None else np.linspace(0.6, 2.4, 13)
    H0, H1 = H_M(0), H_M(1)
    P = H1 - H0
    if not (H_M(2) - H0 - 2 * P).equals(OperatorSpec.identity(H0.variables) * 0):
        raise ValueError("family is not affine in M")
    HM = H_M(M)
    rows_a, rows_b = [], []
    x = S.variables[0]
    for f in tests:
        Sf = sp.expand(S.apply(f))
        lhs = S.apply(HM.apply(f)) - H0.apply(Sf)
        fl = sp.lambdify(x, lhs, "mpmath")
        fp = sp.lambdify(x, P.apply(Sf), "mpmath")
        fs = sp.lambdify(x, Sf, "mpmath")
        for t in pts:
            rows_a.append([complex(fp(t)), complex(fs(t))])
            rows_b.append(complex(fl(t)))
    A, b = np.array(rows_a), np.array(rows_b)
    sol, *_ = np.linalg.lstsq(A, b, rcond=None)
    Mbar, eta = sol.real
    res = float(np.linalg.norm(A @ sol - b) / max(np.linalg.norm(b), 1e-300))
    if res > tol:
        raise ValueError(f"no M' reproduces the intertwining relation (relative residual {res:.2e})")
    M = float(M)
    scale = max(1.0, abs(M))
    if abs(Mbar - M) <= tol * scale * 1e2:
        kind = "symmetry" if abs(eta) <= tol * scale * 1e2 else "ladder"
    else:
        kind = "shift"
    return Classification(kind, float(Mbar), float(eta), res, {"M": M})


def ladder_classify(apply_op, apply_H, psi, lam, tol=1e-6):
    """lambda-bar with H (op psi) = lambda-bar (op psi)."""
    phi = apply_op(psi)
    Hphi = apply_H(phi)
    lb = np.vdot(phi, Hphi) / np.vdot(phi, phi)
    res = float(np.linalg.norm(Hphi - lb * phi) / np.linalg.norm(phi))
    if res > tol:
        raise ValueError(f"image is not an eigenfunction (residual {res:.2e})")
    lb = float(lb.real)
    kind = "symmetry" if abs(lb - lam) <= tol * max(1.0, abs(lam)) else "ladder"
    return Classification(kind, lb, 0.0, res, {"lambda": float(lam), "direction": "up" if lb > lam else "down"})
