"""Phase-space expressions on top of sympy.

Expressions are plain sympy objects built from the symbols of a Chart
(q1..qN, p1..pN and optionally u, pu) and named real parameters.  This
module adds the canonical bracket, the flow operator X_L, a small text
grammar (parser and printer), a domain-checked evaluator and a
zero test that is exact on the polynomial-in-momenta / trigonometric
class and falls back to random sampling elsewhere.
"""
from dataclasses import dataclass, field
from fractions import Fraction
import math
import re

import numpy as np
import sympy as sp

FUNCS = {"sin": sp.sin, "cos": sp.cos, "sinh": sp.sinh, "cosh": sp.cosh, "sqrt": sp.sqrt}
_RESERVED = re.compile(r"^(q\d+|p\d+|u|pu)$")


def var(name):
    return sp.Symbol(name, real=True)


def param(name):
    """Named real parameter (kept symbolic until bound)."""
    return sp.Symbol(name, real=True)


def params(names):
    return [param(n) for n in names.replace(",", " ").split()]


U = var("u")
PU = var("pu")


class Chart:
    """Canonical coordinates (q^i, p_i), optionally with the extension pair (u, pu)."""

    def __init__(self, n, extended=False):
        if n < 1:
            raise ValueError("chart needs at least one degree of freedom")
        self.n = n
        self.extended = extended
        self.q = tuple(var(f"q{i}") for i in range(1, n + 1))
        self.p = tuple(var(f"p{i}") for i in range(1, n + 1))

    @property
    def pairs(self):
        out = list(zip(self.q, self.p))
        if self.extended:
            out.append((U, PU))
        return out

    @property
    def coords(self):
        return [a for a, _ in self.pairs]

    @property
    def momenta(self):
        return [b for _, b in self.pairs]

    @property
    def variables(self):
        return self.coords + self.momenta

    def names(self):
        return {str(v): v for v in self.variables}

    def extend(self):
        return Chart(self.n, extended=True)

    def __eq__(self, other):
        return isinstance(other, Chart) and (self.n, self.extended) == (other.n, other.extended)

    def __hash__(self):
        return hash((self.n, self.extended))

    def __repr__(self):
        return f"Chart(n={self.n}, extended={self.extended})"


def free_vars(f, chart):
    return set(f.free_symbols) & set(chart.variables)


def free_params(f, chart):
    return set(f.free_symbols) - set(chart.variables)


# ---------------------------------------------------------------- calculus

def diff(f, v):
    return sp.diff(f, v)


def poisson(f, g, chart):
    """{f,g} = sum_a df/dq^a dg/dp_a - df/dp_a dg/dq^a."""
    return sp.Add(*[sp.diff(f, a) * sp.diff(g, b) - sp.diff(f, b) * sp.diff(g, a) for a, b in chart.pairs])


def x_flow(L, F, chart):
    """X_L(F) := {F, L}."""
    return poisson(F, L, chart)


def momentum_degree(f, chart):
    f = sp.expand(f)
    if f == 0:
        return 0
    return sp.Poly(f, *chart.momenta).total_degree()


# ---------------------------------------------------------------- parser

class ParseError(ValueError):
    def __init__(self, msg, pos):
        super().__init__(f"{msg} at offset {pos}")
        self.pos = pos


_TOKEN = re.compile(r"\s*(?:(\d+\.\d*(?:[eE][-+]?\d+)?|\.\d+(?:[eE][-+]?\d+)?|\d+[eE][-+]?\d+)|(\d+)|([A-Za-z_]\w*)|(.))")


def _tokenize(text):
    toks = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            break
        start = m.start(m.lastindex)
        kind = ("float", "int", "ident", "op")[m.lastindex - 1]
        toks.append((kind, m.group(m.lastindex), start))
        pos = m.end()
    toks.append(("end", "", len(text)))
    return toks


class _Parser:
    def __init__(self, text, chart, names):
        self.toks = _tokenize(text)
        self.i = 0
        self.chart = chart
        self.vars = chart.names()
        self.names = names

    def peek(self):
        return self.toks[self.i]

    def take(self, val=None):
        tok = self.toks[self.i]
        if val is not None and tok[1] != val:
            what = "end of input" if tok[0] == "end" else repr(tok[1])
            raise ParseError(f"expected {val!r}, got {what}", tok[2])
        self.i += 1
        return tok

    def expr(self):
        out = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.term()
            out = out + rhs if op == "+" else out - rhs
        return out

    def term(self):
        out = self.factor()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.factor()
            out = out * rhs if op == "*" else out / rhs
        return out

    def factor(self):
        # unary minus is accepted here so that printed output re-parses
        if self.peek()[0] == "op" and self.peek()[1] == "-":
            self.take()
            return -self.factor()
        base = self.base()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            return base ** self.exponent()
        return base

    def _signed_int(self):
        sign = 1
        if self.peek()[1] == "-":
            self.take()
            sign = -1
        tok = self.take()
        if tok[0] != "int":
            raise ParseError("expected integer exponent", tok[2])
        return sign * int(tok[1])

    def exponent(self):
        tok = self.peek()
        if tok[0] == "int":
            return sp.Integer(int(self.take()[1]))
        if tok[1] == "(":
            self.take()
            num = self._signed_int()
            den = 1
            if self.peek()[1] == "/":
                self.take()
                den = self._signed_int()
                if den == 0:
                    raise ParseError("zero denominator in exponent", self.peek()[2])
            self.take(")")
            return sp.Rational(num, den)
        raise ParseError("expected exponent", tok[2])

    def base(self):
        kind, val, pos = self.take()
        if kind == "int":
            return sp.Integer(int(val))
        if kind == "float":
            return sp.Float(val)
        if kind == "ident":
            if val in FUNCS:
                self.take("(")
                arg = self.expr()
                self.take(")")
                return FUNCS[val](arg)
            if val in self.vars:
                return self.vars[val]
            if val == "pi":
                return sp.pi
            if _RESERVED.match(val):
                raise ParseError(f"unknown identifier {val!r} (not in chart)", pos)
            if self.names is None or val in self.names:
                return param(val)
            raise ParseError(f"unknown identifier {val!r}", pos)
        if val == "(":
            out = self.expr()
            self.take(")")
            return out
        if kind == "end":
            raise ParseError("unexpected end of input", pos)
        raise ParseError(f"unexpected {val!r}", pos)


def parse(text, chart, names=None):
    """Parse `text` into a sympy expression on `chart`.

    `names` restricts the admissible parameter identifiers; None accepts any
    non-reserved identifier as a parameter.
    """
    p = _Parser(text, chart, None if names is None else set(names))
    out = p.expr()
    tok = p.peek()
    if tok[0] != "end":
        raise ParseError(f"unexpected {tok[1]!r}", tok[2])
    return out


# ---------------------------------------------------------------- printer

_FNAME = {sp.sin: "sin", sp.cos: "cos", sp.sinh: "sinh", sp.cosh: "cosh"}


def to_text(e):
    """Print in the grammar accepted by parse (parse(to_text(e)) == e)."""
    return _pr(sp.sympify(e))


def _atom_needs_paren(e):
    if isinstance(e, (sp.Add, sp.Mul)):
        return True
    if isinstance(e, sp.Pow):
        return True
    if isinstance(e, sp.Rational) and not isinstance(e, sp.Integer):
        return True
    if e.is_Number and e.is_negative:
        return True
    if isinstance(e, sp.Float):
        return True
    return False


def _base(e):
    s = _pr(e)
    return f"({s})" if _atom_needs_paren(e) else s


def _exp_text(x):
    x = sp.Rational(x)
    if x.q == 1 and x >= 0:
        return str(x.p)
    return f"({x.p}/{x.q})" if x.q != 1 else f"({x.p})"


def _pr(e):
    if isinstance(e, sp.Integer):
        return str(int(e))
    if isinstance(e, sp.Rational):
        return f"{e.p}/{e.q}"
    if isinstance(e, sp.Float):
        return repr(float(e))
    if e is sp.pi:
        return "pi"
    if isinstance(e, sp.Symbol):
        return e.name
    if isinstance(e, sp.Add):
        terms = e.as_ordered_terms()
        out = _pr(terms[0])
        for t in terms[1:]:
            c, rest = t.as_coeff_Mul()
            if c.is_Number and c.is_negative:
                out += " - " + _pr(-t)
            else:
                out += " + " + _pr(t)
        return out
    if isinstance(e, sp.Mul):
        c, rest = e.as_coeff_Mul()
        if c.is_Number and c.is_negative:
            return "-" + _mulbody(-e)
        return _mulbody(e)
    if isinstance(e, sp.Pow):
        b, x = e.args
        if x == sp.Rational(1, 2):
            return f"sqrt({_pr(b)})"
        if not x.is_Rational:
            raise ValueError(f"non-rational exponent in {e}")
        return f"{_base(b)}^{_exp_text(x)}"
    if e.func in _FNAME:
        return f"{_FNAME[e.func]}({_pr(e.args[0])})"
    raise ValueError(f"cannot print {e!r} in the expression grammar")


def _mulbody(e):
    num, den = [], []
    c, rest = e.as_coeff_Mul()
    factors = sp.Mul.make_args(rest)
    if c != 1:
        if isinstance(c, sp.Rational) and not isinstance(c, sp.Integer):
            if c.p != 1:
                num.append(str(c.p))
            den.append(str(c.q))
        else:
            num.append(_base(c) if not isinstance(c, sp.Integer) else str(int(c)))
    for f in factors:
        if isinstance(f, sp.Pow) and f.exp.is_Rational and f.exp.is_negative:
            inv = f.base ** (-f.exp)
            den.append(_base(inv) if not isinstance(inv, sp.Pow) else _pr(inv))
        else:
            num.append(_base(f))
    s = "*".join(num) if num else "1"
    for d in den:
        s += "/" + d
    return s


# ---------------------------------------------------------------- evaluation

class DomainError(ArithmeticError):
    def __init__(self, msg, subtree):
        super().__init__(f"{msg}: {subtree}")
        self.subtree = subtree


def _bind(pt):
    out = {}
    for k, v in pt.items():
        out[k.name if isinstance(k, sp.Symbol) else str(k)] = v
    return out


def evaluate(f, pt):
    """Evaluate `f` at a total assignment `pt` (symbol or name -> float)."""
    return _ev(sp.sympify(f), _bind(pt))


def _ev(e, env):
    if not e.free_symbols:
        if e.is_Rational:
            return float(e)
        val = complex(sp.N(e, 30))
        if not math.isfinite(val.real) or abs(val.imag) > 1e-12 * max(1.0, abs(val.real)):
            raise DomainError("non-real or infinite constant", e)
        return val.real
    if isinstance(e, sp.Symbol):
        if e.name not in env:
            raise KeyError(f"unbound symbol {e.name}")
        return float(env[e.name])
    if isinstance(e, sp.Add):
        return math.fsum(_ev(a, env) for a in e.args)
    if isinstance(e, sp.Mul):
        out = 1.0
        for a in e.args:
            out *= _ev(a, env)
        return out
    if isinstance(e, sp.Pow):
        b = _ev(e.base, env)
        x = e.exp
        if x.is_Integer:
            if b == 0 and x < 0:
                raise DomainError("division by zero", e.base)
            return b ** int(x)
        xv = _ev(x, env)
        if b < 0:
            raise DomainError("fractional power of a negative number", e.base)
        if b == 0 and xv < 0:
            raise DomainError("division by zero", e.base)
        return b ** xv
    fn = {sp.sin: math.sin, sp.cos: math.cos, sp.sinh: math.sinh, sp.cosh: math.cosh,
          sp.exp: math.exp, sp.tan: math.tan, sp.tanh: math.tanh}
    if e.func in fn:
        return fn[e.func](_ev(e.args[0], env))
    if e.func is sp.cot:
        t = math.tan(_ev(e.args[0], env))
        if t == 0:
            raise DomainError("pole of cot", e)
        return 1.0 / t
    if e.func is sp.log:
        a = _ev(e.args[0], env)
        if a <= 0:
            raise DomainError("log of non-positive number", e.args[0])
        return math.log(a)
    raise DomainError("unsupported node", e)


def numeric(exprs, symbols, complex_=False):
    """Vectorised numpy evaluator for a list of expressions (common subexpressions shared)."""
    single = not isinstance(exprs, (list, tuple))
    ex = [exprs] if single else list(exprs)
    fn = sp.lambdify(list(symbols), ex, modules="numpy", cse=True)

    def call(*args):
        with np.errstate(all="ignore"):
            vals = fn(*args)
        shape = np.broadcast(*args).shape if args else ()
        vals = [np.broadcast_to(np.asarray(v, dtype=complex if complex_ else float) if not complex_
                                else np.asarray(v, dtype=complex), shape) for v in vals]
        return vals[0] if single else vals
    return call


# ---------------------------------------------------------------- zero test

@dataclass
class ZeroTest:
    verdict: str            # "zero", "probabilistic-zero", "nonzero" or "inapplicable"
    residual: object = 0
    witness: dict = field(default_factory=dict)
    max_abs: float = 0.0

    def __bool__(self):
        return self.verdict in ("zero", "probabilistic-zero")


def _rgcd(fracs):
    num = 0
    den = 1
    for f in fracs:
        num = math.gcd(num, f.numerator)
        den = math.lcm(den, f.denominator)
    return Fraction(num, den)


def _linear_coef(a):
    v = list(a.free_symbols)
    if len(v) != 1:
        return None, None
    coef = sp.simplify(a / v[0])
    if not (coef.is_Rational and coef != 0):
        return None, None
    return v[0], Fraction(int(coef.p), int(coef.q))


def _trig_rational(e, syms):
    """Map an expression to a rational function when it lies in the
    rational-trig-exp class: sin/cos of rational multiples of a variable via
    half-angle tangents, sinh/cosh/exp via exponentials.  Returns None outside
    that class."""
    e = e.replace(lambda x: x.func in (sp.sinh, sp.cosh, sp.tanh), lambda x: x.rewrite(sp.exp))
    trig = {}
    for fn in e.atoms(sp.sin, sp.cos, sp.tan, sp.cot):
        v, c = _linear_coef(fn.args[0])
        if v is None:
            return None
        trig.setdefault(v, []).append(c)
    expo = {}
    for x in e.atoms(sp.exp):
        v, c = _linear_coef(x.args[0])
        if v is None:
            return None
        expo.setdefault(v, []).append(c)
    out = e
    for v, coefs in trig.items():
        step = _rgcd(coefs)
        th = sp.Dummy("th", real=True)
        t = sp.Dummy("t", real=True)
        out = out.subs(v, sp.Rational(step.denominator, step.numerator) * th)
        out = sp.expand_trig(out)
        out = out.subs({sp.tan(th): sp.sin(th) / sp.cos(th), sp.cot(th): sp.cos(th) / sp.sin(th)})
        out = out.subs({sp.sin(th): 2 * t / (1 + t ** 2), sp.cos(th): (1 - t ** 2) / (1 + t ** 2)})
        if out.has(th):
            return None
    for v, coefs in expo.items():
        step = _rgcd(coefs)
        w = sp.Dummy("w", positive=True)
        out = out.subs(v, sp.log(w) * sp.Rational(step.denominator, step.numerator))
        out = sp.powsimp(sp.expand_power_exp(out), force=True)
        if out.has(sp.log):
            return None
    if out.has(sp.sin, sp.cos, sp.tan, sp.cot, sp.sinh, sp.cosh, sp.exp, sp.tanh, sp.log):
        return None
    return out


def _rational_zero(e, syms):
    r = _trig_rational(e, syms)
    if r is None:
        return None
    num = sp.numer(sp.together(r))
    num = sp.expand(num)
    if num == 0:
        return True
    # algebraic atoms such as sqrt(x) survive; a nonzero polynomial in
    # independent atoms is decided nonzero only if free of radicals
    if not any(isinstance(a, sp.Pow) and not a.exp.is_Integer for a in num.atoms(sp.Pow)):
        return False
    return None


def sample_point(syms, rng, lo=-2.0, hi=2.0):
    return {s: rng.uniform(lo, hi) for s in syms}


def is_zero(f, chart=None, npoints=32, tol=1e-9, seed=0x5EED, symbolic=True, box=(-2.0, 2.0)):
    """Zero test: exact on the rational-trig class, otherwise random sampling."""
    f = sp.sympify(f)
    if f == 0:
        return ZeroTest("zero", 0)
    e = sp.expand(f)
    if e == 0:
        return ZeroTest("zero", 0)
    syms = sorted(e.free_symbols, key=lambda s: s.name)
    if symbolic:
        try:
            verdict = _rational_zero(e, syms)
        except Exception:
            verdict = None
        if verdict is True:
            return ZeroTest("zero", 0)
    rng = np.random.default_rng(seed)
    fn = sp.lambdify(syms, e, modules="numpy")
    worst, wit, got = 0.0, {}, 0
    scale_fn = None
    for _ in range(npoints * 20):
        pt = {s: rng.uniform(*box) for s in syms}
        for s in syms:
            if s.name == "u" and abs(pt[s]) < 0.2:
                pt[s] = math.copysign(0.2, pt[s]) + pt[s]
        with np.errstate(all="ignore"):
            try:
                v = complex(fn(*[pt[s] for s in syms]))
            except (ZeroDivisionError, ValueError, OverflowError):
                continue
        if not np.isfinite(v):
            continue
        got += 1
        if abs(v) > worst:
            worst, wit = abs(v), {s.name: pt[s] for s in syms}
        if got >= npoints:
            break
    if got == 0:
        return ZeroTest("nonzero", e, {}, float("nan"))
    if worst < tol:
        return ZeroTest("probabilistic-zero", e, wit, worst)
    return ZeroTest("nonzero", e, wit, worst)


def simplify(f, chart=None):
    """Canonical form: expanded polynomial in the momenta with simplified coefficients."""
    f = sp.expand(sp.sympify(f))
    if f == 0:
        return sp.Integer(0)
    gens = list(chart.momenta) if chart is not None else [s for s in f.free_symbols if s.name.startswith("p")]
    if not gens:
        return _coef(f)
    poly = sp.Poly(f, *gens)
    out = []
    for mon, c in poly.terms():
        c = _coef(c)
        if c != 0:
            out.append(c * sp.Mul(*[g ** k for g, k in zip(gens, mon)]))
    return sp.Add(*out)


def _coef(c):
    if c == 0:
        return sp.Integer(0)
    try:
        if _rational_zero(sp.expand(c), sorted(c.free_symbols, key=str)) is True:
            return sp.Integer(0)
    except Exception:
        pass
    if sp.count_ops(c) < 120:
        c = sp.trigsimp(sp.cancel(c))
    return c
