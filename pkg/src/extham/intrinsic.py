"""Intrinsic characterization of warped (extended) structure: conformal
Killing vectors, the four exterior-product conditions and the Ricci
eigenvector condition R(X) = aX."""
from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations

import numpy as np
import sympy as sp

from .phase_expr import is_zero, numeric
from .verification import VerificationReport, summarize


class MetricData:
    """Metric g_ab (covariant) in coordinates xs; derived tensors cached."""

    def __init__(self, coords, g):
        self.x = list(coords)
        self.g = sp.Matrix(g)
        if self.g != self.g.T:
            raise ValueError("metric must be symmetric")
        self.dim = len(self.x)

    @cached_property
    def ginv(self):
        return sp.simplify(self.g.inv())

    @cached_property
    def christoffel(self):
        """G[k][i][j] = Gamma^k_ij."""
        x, g, gi, n = self.x, self.g, self.ginv, self.dim
        dg = [[[sp.diff(g[i, j], x[k]) for k in range(n)] for j in range(n)] for i in range(n)]
        out = [[[0] * n for _ in range(n)] for _ in range(n)]
        for k in range(n):
            for i in range(n):
                for j in range(i, n):
                    v = sum(gi[k, l] * (dg[j][l][i] + dg[i][l][j] - dg[i][j][l]) for l in range(n)) / 2
                    out[k][i][j] = out[k][j][i] = sp.simplify(v)
        return out

    @cached_property
    def ricci(self):
        """R_ij = d_k G^k_ij - d_j G^k_ik + G^k_kl G^l_ij - G^k_jl G^l_ik (covariant)."""
        x, G, n = self.x, self.christoffel, self.dim
        R = sp.zeros(n, n)
        for i in range(n):
            for j in range(i, n):
                v = 0
                for k in range(n):
                    v += sp.diff(G[k][i][j], x[k]) - sp.diff(G[k][i][k], x[j])
                    for l in range(n):
                        v += G[k][k][l] * G[l][i][j] - G[k][j][l] * G[l][i][k]
                R[i, j] = R[j, i] = sp.simplify(v)
        return R

    @cached_property
    def ricci_mixed(self):
        return sp.simplify(self.ginv * self.ricci)

    def hessian(self, f):
        """nabla_i nabla_j f."""
        x, G, n = self.x, self.christoffel, self.dim
        return sp.Matrix(n, n, lambda i, j: sp.diff(f, x[i], x[j]) - sum(G[k][i][j] * sp.diff(f, x[k]) for k in range(n)))

    def lower(self, X):
        return list(self.g * sp.Matrix(X))

    def norm(self, X):
        v = sp.Matrix(X)
        return sp.sqrt(sp.simplify((v.T * self.g * v)[0, 0]))


@dataclass
class VectorFieldData:
    components: list

    def flat(self, metric):
        return metric.lower(self.components)

    def apply(self, f, metric):
        return sum(c * sp.diff(f, x) for c, x in zip(self.components, metric.x))


def lie_metric(metric, X):
    """(L_X g)_ab = X^c d_c g_ab + g_cb d_a X^c + g_ac d_b X^c."""
    x, g, n = metric.x, metric.g, metric.dim
    Xc = X.components
    return sp.Matrix(n, n, lambda a, b: sum(Xc[c] * sp.diff(g[a, b], x[c]) + g[c, b] * sp.diff(Xc[c], x[a])
                                            + g[a, c] * sp.diff(Xc[c], x[b]) for c in range(n)))


def _zero_all(exprs, box):
    worst = None
    for e in exprs:
        z = is_zero(sp.expand(e), box=box)
        if not z:
            return z
        worst = z if worst is None or z.verdict != "zero" else worst
    return worst


def conformal_factor(metric, X, box=(0.3, 2.5)):
    """phi with L_X g = phi g (trace candidate) and the deviation matrix."""
    LX = lie_metric(metric, X)
    phi = sp.simplify((metric.ginv * LX).trace() / metric.dim)
    dev = sp.simplify(LX - phi * metric.g)
    z = _zero_all(list(dev), box)
    return phi, dev, z


# exterior algebra on component arrays -------------------------------------

def d0(f, x):
    return [sp.diff(f, xi) for xi in x]


def d1(w, x):
    """(dw)_ab = d_a w_b - d_b w_a as a dict on a<b."""
    n = len(x)
    return {(a, b): sp.diff(w[b], x[a]) - sp.diff(w[a], x[b]) for a, b in combinations(range(n), 2)}


def wedge11(a, b):
    n = len(a)
    return {(i, j): a[i] * b[j] - a[j] * b[i] for i, j in combinations(range(n), 2)}


def wedge21(F, w):
    n = len(w)
    return {(i, j, k): F[(i, j)] * w[k] - F[(i, k)] * w[j] + F[(j, k)] * w[i] for i, j, k in combinations(range(n), 3)}


def warp_conditions(metric, X, V):
    """Component dicts for dX^b^X^b, dphi^X^b, d|X|^X^b, d(X(V)+phi V)^X^b."""
    x = metric.x
    Xf = X.flat(metric)
    phi, _, _ = conformal_factor(metric, X)
    nX = metric.norm(X.components)
    W = sp.simplify(X.apply(V, metric) + phi * V)
    return {
        "Xnorm": wedge21(d1(Xf, x), Xf),
        "phi_u": wedge11(d0(phi, x), Xf),
        "Xconst": wedge11(d0(nX, x), Xf),
        "Vok": wedge11(d0(W, x), Xf),
    }, phi, W


def check_warp_conditions(metric, X, V, points=None, box=(0.3, 2.5), n=50, seed=0x5EED, tol=1e-9):
    """Evaluate the four exterior conditions; symbolic zero test first, then
    numeric evaluation at sample points (normalised by the 1-form size)."""
    conds, phi, W = warp_conditions(metric, X, V)
    rng = np.random.default_rng(seed)
    if points is None:
        points = rng.uniform(*box, size=(n, metric.dim))
    results = {}
    for name, comps in conds.items():
        exprs = [sp.simplify(e) for e in comps.values()] or [sp.Integer(0)]
        sym = [is_zero(sp.expand(e), box=box) for e in exprs]
        f = numeric(exprs, metric.x)
        with np.errstate(all="ignore"):
            vals = np.abs(np.stack(f(*points.T), axis=1)).max(axis=1) if exprs else np.zeros(len(points))
        symbolic = all(z.verdict == "zero" for z in sym)
        ok = all(bool(z) for z in sym) and np.nanmax(vals) < tol
        results[name] = {"pass": bool(ok), "symbolic": symbolic, "max": float(np.nanmax(vals)),
                         "nonzero_components": [str(k) for k, z in zip(comps.keys(), sym) if not z]}
    allok = all(r["pass"] for r in results.values())
    worst = max(r["max"] for r in results.values())
    wit = [{"condition": k, **v} for k, v in results.items() if not v["pass"]]
    return VerificationReport("warp-conditions", len(points), {"max": worst, "mean": worst, "rms": worst}, tol,
                              "pass" if allok else "fail", wit, {}, {"conditions": results, "phi": str(phi),
                                                                      "XV_plus_phiV": str(W)})


def ricci_eigen(metric, X, box=(0.3, 2.5), n=50, seed=0x5EED, tol=1e-9):
    """a with R(X) = aX (R^a_b X^b), residual, and constancy of a."""
    RX = list(metric.ricci_mixed * sp.Matrix(X.components))
    Xc = X.components
    a = None
    for r, c in zip(RX, Xc):
        if sp.simplify(c) != 0:
            a = sp.simplify(r / c)
            break
    if a is None:
        raise ValueError("X vanishes identically")
    res = [sp.simplify(r - a * c) for r, c in zip(RX, Xc)]
    z = _zero_all(res, box)
    const = _zero_all([sp.diff(a, xi) for xi in metric.x], box)
    rng = np.random.default_rng(seed)
    pts = rng.uniform(*box, size=(n, metric.dim))
    f = numeric(res, metric.x)
    with np.errstate(all="ignore"):
        vals = np.abs(np.stack(f(*pts.T), axis=1)).max(axis=1)
    ok = bool(z) and bool(const)
    return a, VerificationReport("ricci-eigen", n, summarize(vals), tol, "pass" if ok else "fail", [],
                                 {}, {"a": str(a), "a_constant": bool(const)})


def ricci_fd(metric, point, h1=1e-3, h2=1e-2):
    """Finite-difference Ricci tensor (fourth-order stencils) for cross-checks."""
    x, n = metric.x, metric.dim
    gf = sp.lambdify(x, metric.g, "numpy")
    pt = np.asarray(point, float)

    def d4(f, p, k, h):
        e = np.zeros(n)
        e[k] = h
        return (-f(p + 2 * e) + 8 * f(p + e) - 8 * f(p - e) + f(p - 2 * e)) / (12 * h)

    def gam(p):
        g = np.array(gf(*p), float)
        gi = np.linalg.inv(g)
        dg = np.array([d4(lambda q: np.array(gf(*q), float), p, k, h1) for k in range(n)])  # dg[k,i,j]
        G = np.zeros((n, n, n))
        for k in range(n):
            for i in range(n):
                for j in range(n):
                    G[k, i, j] = 0.5 * sum(gi[k, l] * (dg[i, j, l] + dg[j, i, l] - dg[l, i, j]) for l in range(n))
        return G
    G = gam(pt)
    dG = np.array([d4(gam, pt, k, h2) for k in range(n)])  # dG[m,k,i,j] = d_m G^k_ij
    R = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            R[i, j] = sum(dG[k, k, i, j] - dG[j, k, i, k] for k in range(n)) + \
                sum(G[k, k, l] * G[l, i, j] - G[k, j, l] * G[l, i, k] for k in range(n) for l in range(n))
    return R
