"""Built-in systems: TTW, PW / Kepler-Coulomb, Jacobi-Calogero, the
anisotropic oscillator and a few curved seeds used as fixtures."""
from dataclasses import dataclass, field

import sympy as sp

from .phase_expr import Chart, PU, U, param, var
from .extension_core import ExtensionSpec, SeedSystem, build_extended
from .intrinsic import MetricData, VectorFieldData

Q1 = var("q1")
P1 = var("p1")


@dataclass
class CatalogEntry:
    name: str
    chart: Chart
    H: object
    seed: SeedSystem = None
    spec: ExtensionSpec = None
    dictionary: dict = field(default_factory=dict)
    forms: dict = field(default_factory=dict)
    notes: str = ""
    ladder_seed: SeedSystem = None
    angular: tuple = ()           # names of angular variables (sampling guard)
    intrinsic: dict = field(default_factory=dict)

    def extended(self):
        if self.seed is None:
            raise ValueError(f"{self.name} has no extension seed")
        return build_extended(self.seed, self.spec)


def _q(v):
    return sp.nsimplify(v) if not isinstance(v, sp.Basic) else v


def ttw_seed(c1, c2):
    """L = p^2/2 + (c1 + c2 cos q)/sin^2 q with G = sin(q) p, c = 1, c0 = 0."""
    ch = Chart(1)
    return SeedSystem(ch, [[1]], (c1 + c2 * sp.cos(Q1)) / sp.sin(Q1) ** 2, sp.sin(Q1) * P1, 1, 0,
                      name="ttw-angular")


def ttw_ladder_seed(c1, c2):
    """Same L, momentum-free G = cos q; the ladder constant is -c2."""
    ch = Chart(1)
    return SeedSystem(ch, [[1]], (c1 + c2 * sp.cos(Q1)) / sp.sin(Q1) ** 2, sp.cos(Q1), 1, 0, -c2,
                      name="ttw-ladder")


def _intrinsic_data(seed, spec):
    """Extended metric in (u, q), the vector X = (-gamma')^(-1/2) d_u and the potential."""
    gam = spec.gamma(seed)
    alpha = sp.simplify(-spec.k ** 2 * sp.diff(gam, U))
    n = seed.chart.n
    g = sp.zeros(n + 1, n + 1)
    g[0, 0] = 1
    g[1:, 1:] = sp.simplify(seed.g / alpha)
    # X is taken on the branch u > 0 (and sin u > 0 for the cot branch)
    X = [sp.simplify(1 / sp.sqrt(sp.diff(-gam, U))).replace(sp.Abs, lambda a: a)] + [0] * n
    V = sp.simplify(alpha * seed.V + spec.k ** 2 * seed.c0 * gam ** 2 + spec.Omega / gam ** 2)
    return {"metric": MetricData([U] + list(seed.chart.q), g), "X": VectorFieldData([sp.simplify(x) for x in X]), "V": V}


def ttw_extension(m, n, c1=sp.Rational(7, 10), c2=sp.Rational(3, 10), Omega=1):
    """TTW as the extension of the angular seed: H = p_u^2/2 + (k^2/u^2) L + Omega u^2."""
    c1, c2, Omega = map(_q, (c1, c2, Omega))
    seed = ttw_seed(c1, c2)
    spec = ExtensionSpec(m, n, Omega, 0)
    H = build_extended(seed, spec)
    k = spec.k
    return CatalogEntry(
        "ttw", seed.chart.extend(), H, seed, spec,
        {"r": "u", "phi": "q1", "k_TTW2": 1 / k, "omega_TTW": Omega * seed.c ** 2, "c1": c1, "c2": c2},
        notes="extension k equals 1/k of the polar form with 1/(k^2 r^2)",
        ladder_seed=ttw_ladder_seed(c1, c2), angular=("q1",), intrinsic=_intrinsic_data(seed, spec))


def ttw(alpha1, alpha2, omega, h):
    """TTW in the (r, Phi) form with alpha_1/cos^2(h Phi) + alpha_2/sin^2(h Phi) + omega r^2,
    realised as the extension with k = 2h (polar form with k_TTW2 = 1/(2h), Phi = k_TTW2 phi)."""
    h = _q(h)
    if not h > 0:
        raise ValueError("h must be positive")
    a1, a2, w = map(_q, (alpha1, alpha2, omega))
    r, Phi, pr, pPhi = U, Q1, PU, P1
    H1 = pr ** 2 / 2 + (pPhi ** 2 / 2 + a1 / sp.cos(h * Phi) ** 2 + a2 / sp.sin(h * Phi) ** 2) / r ** 2 + w * r ** 2
    kt = 1 / (2 * h)                                   # k of the polar form
    c1 = (a1 + a2) / (2 * h ** 2)
    c2 = (a2 - a1) / (2 * h ** 2)
    kext = 1 / kt
    m, n = sp.fraction(sp.Rational(kext))
    entry = ttw_extension(int(m), int(n), c1, c2, w)
    entry.forms["TTW1"] = H1
    entry.forms["TTW2"] = ttw2(kt, c1, c2, w)
    entry.dictionary.update({"alpha1": a1, "alpha2": a2, "h": h, "Phi": "k_TTW2 * phi"})
    entry.H1 = H1
    return entry


def ttw2(k, c1, c2, omega):
    """p_r^2/2 + (1/(k^2 r^2))(p_phi^2/2 + (c1 + c2 cos phi)/sin^2 phi) + omega r^2 in (u, q1)."""
    return PU ** 2 / 2 + (P1 ** 2 / 2 + (c1 + c2 * sp.cos(Q1)) / sp.sin(Q1) ** 2) / (k ** 2 * U ** 2) + omega * U ** 2


def ttw3(k, c1, c2, omega):
    """Covering form in Phi (coordinate q1 stands for Phi): the trig argument is Phi/k so
    that the pull-back Phi = k phi of the polar form is reproduced."""
    ct1, ct2 = c1 / k ** 2, c2 / k ** 2
    return PU ** 2 / 2 + (P1 ** 2 / 2 + (ct1 + ct2 * sp.cos(Q1 / k)) / sp.sin(Q1 / k) ** 2) / U ** 2 + omega * U ** 2


def pw(c1, c2, k, E):
    """p_r^2/2 + (k^2/(4 r^2))(p_phi^2/2 + (c1 + c2 cos phi)/sin^2 phi) - E/(2r)."""
    c1, c2, k, E = map(_q, (c1, c2, k, E))
    H = PU ** 2 / 2 + k ** 2 / (4 * U ** 2) * (P1 ** 2 / 2 + (c1 + c2 * sp.cos(Q1)) / sp.sin(Q1) ** 2) - E / (2 * U)
    return CatalogEntry("pw", Chart(1, True), H, dictionary={"r": "u", "phi": "q1", "c1": c1, "c2": c2, "k": k, "E": E},
                        notes="coupling-constant metamorphosis of TTW; no extension seed", angular=("q1",))


def kepler(k, E):
    e = pw(0, 0, k, E)
    e.name = "kepler"
    return e


def jacobi_calogero(l=1):
    """Three particles on a line with pairwise inverse-square interaction, and the
    polar reduced form l/(r^2 sin^2 3phi) realised as the k = 3 extension of the
    seed p^2/2 + (l/9)/sin^2 q in q = 3 phi."""
    l = _q(l)
    ch3 = Chart(3)
    x1, x2, x3 = ch3.q
    V = (x1 - x2) ** -2 + (x2 - x3) ** -2 + (x3 - x1) ** -2
    Hc = sum(p ** 2 for p in ch3.p) / 2 + V
    seed = ttw_seed(l / 9, 0)
    spec = ExtensionSpec(3, 1, 0, 0)
    phi = sp.Symbol("phi", real=True)
    polar = PU ** 2 / 2 + P1 ** 2 / (2 * U ** 2) + l / (U ** 2 * sp.sin(3 * Q1) ** 2)
    e = CatalogEntry("jacobi-calogero", Chart(1, True), build_extended(seed, spec), seed, spec,
                     {"r": "u", "psi = 3 phi": "q1", "p_psi = p_phi/3": "p1", "seed c1": l / 9},
                     forms={"cartesian": Hc, "cartesian_V": V, "polar": polar},
                     notes="3 plays the role of k", angular=("q1",),
                     intrinsic=_intrinsic_data(seed, spec))
    e.cartesian_chart = ch3
    return e


def aniso_seed():
    """L = p^2/2 + q^2/2, G = q with c = 0, c0 = 1/2."""
    return SeedSystem(Chart(1), [[1]], Q1 ** 2 / 2, Q1, 0, sp.Rational(1, 2), name="oscillator")


def anisotropic_oscillator(m, n=1, Omega=0):
    """c = 0 branch with C = 1 (gamma = -u): H = p_u^2/2 + k^2 L + k^2 u^2/2 + Omega/u^2."""
    seed = aniso_seed()
    spec = ExtensionSpec(m, n, _q(Omega), 1)
    return CatalogEntry("aniso", seed.chart.extend(), build_extended(seed, spec), seed, spec,
                        {"gamma": "-u"}, notes="frequencies k^2 (q) and k (u) after rescaling",
                        intrinsic=_intrinsic_data(seed, spec))


def circle_seed():
    """L = p^2/2 on the circle, G = sin q, c = 1, c0 = 0 (ladder constant 0)."""
    return SeedSystem(Chart(1), [[1]], 0, sp.sin(Q1), 1, 0, 0, name="circle")


def sphere_extension(m=1, n=1, Omega=0):
    """Circle seed with c = 1, C = 1: gamma = cot u, metric du^2 + sin^2 u dq^2 / k^2."""
    seed = circle_seed()
    spec = ExtensionSpec(m, n, _q(Omega), 1)
    return CatalogEntry("sphere", seed.chart.extend(), build_extended(seed, spec), seed, spec,
                        {"gamma": "cot u"}, angular=(), intrinsic=_intrinsic_data(seed, spec))


def s2_seed():
    """Geodesic L on the unit sphere (q1 = theta, q2 = phi), G = cos(theta), c = 1."""
    ch = Chart(2)
    th = ch.q[0]
    return SeedSystem(ch, sp.diag(1, sp.sin(th) ** 2), 0, sp.cos(th), 1, 0, name="s2")


def s2_extension(m=2, n=1, Omega=0):
    """Extension of the sphere seed with gamma = 1/u: a warped 3-metric that is not of
    constant curvature for k != 1."""
    seed = s2_seed()
    spec = ExtensionSpec(m, n, _q(Omega), 0)
    return CatalogEntry("s2-ext", seed.chart.extend(), build_extended(seed, spec), seed, spec,
                        {"gamma": "1/u"}, angular=("q1",), intrinsic=_intrinsic_data(seed, spec))


def s2_cot_extension(m=2, n=1, Omega=0):
    """Extension of the sphere seed with gamma = cot u (C = 1)."""
    seed = s2_seed()
    spec = ExtensionSpec(m, n, _q(Omega), 1)
    return CatalogEntry("s2-cot", seed.chart.extend(), build_extended(seed, spec), seed, spec,
                        {"gamma": "cot u"}, angular=("q1",), intrinsic=_intrinsic_data(seed, spec))


REGISTRY = {
    "ttw": lambda **kw: ttw_extension(kw.get("m", 1), kw.get("n", 1), kw.get("c1", sp.Rational(7, 10)),
                                      kw.get("c2", sp.Rational(3, 10)), kw.get("Omega", 1)),
    "pw": lambda **kw: pw(kw.get("c1", sp.Rational(7, 10)), kw.get("c2", sp.Rational(3, 10)), kw.get("k", 1), kw.get("E", 1)),
    "kepler": lambda **kw: kepler(kw.get("k", 1), kw.get("E", 1)),
    "jacobi-calogero": lambda **kw: jacobi_calogero(kw.get("l", 1)),
    "aniso": lambda **kw: anisotropic_oscillator(kw.get("m", 1), kw.get("n", 1), kw.get("Omega", 0)),
    "sphere": lambda **kw: sphere_extension(kw.get("m", 1), kw.get("n", 1), kw.get("Omega", 0)),
    "s2-ext": lambda **kw: s2_extension(kw.get("m", 2), kw.get("n", 1), kw.get("Omega", 0)),
    "s2-cot": lambda **kw: s2_cot_extension(kw.get("m", 2), kw.get("n", 1), kw.get("Omega", 0)),
}

SEEDS = {
    "ttw-angular": lambda: ttw_seed(sp.Rational(7, 10), sp.Rational(3, 10)),
    "ttw-angular-symbolic": lambda: ttw_seed(param("c1"), param("c2")),
    "jc-angular": lambda: ttw_seed(sp.Rational(1, 9), 0),
    "oscillator": aniso_seed,
    "circle": circle_seed,
    "s2": s2_seed,
}


def get(name, **kw):
    if name not in REGISTRY:
        raise KeyError(f"unknown catalog entry {name!r}; available: {', '.join(sorted(REGISTRY))}")
    return REGISTRY[name](**kw)
