"""Tagged trigonometric functions S_k, C_k, T_k and the gamma(u) solutions of
gamma' + c gamma^2 + C = 0."""
from dataclasses import dataclass

import numpy as np
import sympy as sp

from .phase_expr import U, is_zero

_TAYLOR = 1e-8


def s_kappa(kappa, x):
    x = np.asarray(x, dtype=float)
    if kappa == 0:
        return x * 1.0
    z = kappa * x * x
    r = np.sqrt(abs(kappa))
    exact = np.sin(r * x) / r if kappa > 0 else np.sinh(r * x) / r
    # x (1 - z/6 + z^2/120 - z^3/5040) near kappa x^2 = 0
    return np.where(np.abs(z) < _TAYLOR, x * (1 - z / 6 + z * z / 120 - z ** 3 / 5040), exact)


def c_kappa(kappa, x):
    x = np.asarray(x, dtype=float)
    if kappa == 0:
        return np.ones_like(x)
    z = kappa * x * x
    r = np.sqrt(abs(kappa))
    exact = np.cos(r * x) if kappa > 0 else np.cosh(r * x)
    return np.where(np.abs(z) < _TAYLOR, 1 - z / 2 + z * z / 24 - z ** 3 / 720, exact)


def t_kappa(kappa, x):
    c = c_kappa(kappa, x)
    # cos(pi/2) rounds to 6e-17, so poles are detected with a small band
    if np.any(np.abs(c) < 1e-14):
        raise ArithmeticError("pole of T_kappa")
    return s_kappa(kappa, x) / c


def _branch(kappa):
    k = sp.sympify(kappa)
    if k.is_zero:
        return 0
    if k.is_positive:
        return 1
    if k.is_negative:
        return -1
    raise ValueError(f"sign of kappa={kappa} is undetermined")


def S(kappa, x):
    """Expr builder for S_kappa(x); kappa must have a known sign."""
    b = _branch(kappa)
    if b == 0:
        return x
    r = sp.sqrt(abs(sp.sympify(kappa)))
    return sp.sin(r * x) / r if b > 0 else sp.sinh(r * x) / r


def Cf(kappa, x):
    b = _branch(kappa)
    if b == 0:
        return sp.Integer(1)
    r = sp.sqrt(abs(sp.sympify(kappa)))
    return sp.cos(r * x) if b > 0 else sp.cosh(r * x)


def T(kappa, x):
    return S(kappa, x) / Cf(kappa, x)


@dataclass(frozen=True)
class GammaSpec:
    c: object = 1
    C: object = 0
    shift: object = 0       # gamma(u - shift)

    @property
    def branch(self):
        return "linear" if sp.sympify(self.c) == 0 else "tagged-cotangent"

    @property
    def kappa(self):
        if self.branch == "linear":
            raise ValueError("kappa is undefined for c = 0")
        return sp.sympify(self.C) / sp.sympify(self.c)


def gamma(spec, u=U):
    """gamma(u): -C u for c=0, C_k(cu)/S_k(cu) otherwise."""
    c = sp.sympify(spec.c)
    x = u - spec.shift
    if spec.branch == "linear":
        return -sp.sympify(spec.C) * x
    k = spec.kappa
    if sp.sympify(k) == 0:
        return 1 / (c * x)
    return Cf(k, c * x) / S(k, c * x)


def gamma_numeric(spec, u):
    c, C = float(spec.c), float(spec.C)
    x = np.asarray(u, dtype=float) - float(spec.shift)
    if c == 0:
        return -C * x
    k = C / c
    return c_kappa(k, c * x) / s_kappa(k, c * x)


def check_gamma_ode(spec, u=U):
    """Residual gamma' + c gamma^2 + C, with its zero test."""
    g = gamma(spec, u)
    res = sp.diff(g, u) + sp.sympify(spec.c) * g ** 2 + sp.sympify(spec.C)
    res = sp.simplify(res)
    return res, is_zero(res, tol=1e-12, box=(0.2, 2.0))
