"""Numeric verification harness: bracket residuals, Jacobian ranks,
trajectories, orbit closure and single-valuedness of integrals."""
from dataclasses import dataclass, field, asdict
import csv
import json
import math

import numpy as np
import sympy as sp
from scipy.integrate import solve_ivp
from scipy.optimize import minimize_scalar

from .phase_expr import Chart, U, numeric

DEFAULT_SEED = 0x5EED
DEFAULT_K_SWEEP = ("1/3", "1/2", "2/3", "1", "3/2", "2", "3")


@dataclass
class VerificationReport:
    test: str
    samples: int
    stats: dict
    tolerance: float
    verdict: str
    witnesses: list = field(default_factory=list)
    params: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    @property
    def passed(self):
        return self.verdict in ("pass", "probabilistic-pass")

    def to_dict(self):
        d = asdict(self)
        return json.loads(json.dumps(d, default=_jsonable))

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, complex):
        return [x.real, x.imag]
    return str(x)


def summarize(vals):
    v = np.abs(np.asarray(vals, dtype=float))
    if v.size == 0:
        return {"max": float("nan"), "mean": float("nan"), "rms": float("nan")}
    return {"max": float(v.max()), "mean": float(v.mean()), "rms": float(np.sqrt((v ** 2).mean()))}


def make_report(test, vals, tol, points=None, names=None, params=None, probabilistic=True, nwit=3, **extra):
    vals = np.asarray(vals, dtype=float)
    stats = summarize(vals)
    ok = vals.size > 0 and np.all(np.isfinite(vals)) and stats["max"] < tol
    verdict = ("probabilistic-pass" if probabilistic else "pass") if ok else "fail"
    wit = []
    if not ok and points is not None:
        bad = np.argsort(-np.nan_to_num(np.abs(vals), nan=np.inf))[:nwit]
        for i in bad:
            wit.append({"point": {n: float(points[i][j]) for j, n in enumerate(names)}, "value": float(vals[i])})
    return VerificationReport(test, int(vals.size), stats, tol, verdict, wit, params or {}, extra)


# ---------------------------------------------------------------- sampling

@dataclass
class Sampler:
    """Uniform sampler: q,p in box, u in +-[u_lo, u_hi]; points where
    |sin(avoid)| < sin_guard or any probe is non-finite are rejected."""
    box: tuple = (-2.0, 2.0)
    u_range: tuple = (0.2, 2.0)
    seed: int = DEFAULT_SEED
    avoid_sin: tuple = ()
    sin_guard: float = 0.05
    u_positive: bool = False
    ranges: dict = field(default_factory=dict)

    def points(self, chart, n, probe=None, max_tries=200):
        rng = np.random.default_rng(self.seed)
        syms = chart.variables
        out = []
        tries = 0
        while len(out) < n and tries < max_tries:
            tries += 1
            m = 4 * n
            cols = []
            for s in syms:
                if s.name in self.ranges:
                    lo, hi = self.ranges[s.name]
                    cols.append(rng.uniform(lo, hi, m))
                elif s == U:
                    mag = rng.uniform(*self.u_range, m)
                    sign = 1.0 if self.u_positive else rng.choice([-1.0, 1.0], m)
                    cols.append(mag * sign)
                else:
                    cols.append(rng.uniform(*self.box, m))
            X = np.stack(cols, axis=1)
            keep = np.ones(m, bool)
            for name in self.avoid_sin:
                j = [s.name for s in syms].index(name)
                keep &= np.abs(np.sin(X[:, j])) >= self.sin_guard
            if probe is not None:
                with np.errstate(all="ignore"):
                    vals = probe(*X.T)
                for v in vals if isinstance(vals, list) else [vals]:
                    keep &= np.isfinite(np.asarray(v))
            out.extend(X[keep])
        if not out:
            raise ValueError("sampling domain is empty")
        return np.array(out[:n])


def gradient_fn(exprs, chart, complex_=False):
    """Returns f(X) -> (values, gradients) for a list of expressions."""
    syms = chart.variables
    flat = []
    for e in exprs:
        flat.append(e)
        flat.extend(sp.diff(e, s) for s in syms)
    fn = numeric(flat, syms, complex_=complex_)
    k = len(syms) + 1

    def call(X):
        vals = fn(*np.asarray(X).T)
        vals = np.stack(vals, axis=-1)
        vals = vals.reshape(vals.shape[:-1] + (len(exprs), k))
        return vals[..., 0], vals[..., 1:]
    return call


def bracket_values(gH, gK, n):
    """{H,K} from gradient arrays (..., 2n)."""
    return (gH[..., :n] * gK[..., n:] - gH[..., n:] * gK[..., :n]).sum(-1)


def bracket_residual(H, K, chart, sampler=None, n=100, tol=1e-9, test="bracket", params=None, complex_=False):
    """max |{H,K}| / (1 + |grad H| |grad K|) over sampled points."""
    sampler = sampler or Sampler()
    f = gradient_fn([H, K], chart, complex_=complex_)
    probe = lambda *cols: list(np.moveaxis(f(np.stack(cols, 1))[0], -1, 0))
    X = sampler.points(chart, n, probe=probe)
    _, g = f(X)
    gH, gK = g[:, 0, :], g[:, 1, :]
    br = bracket_values(gH, gK, len(chart.pairs))
    norm = 1 + np.linalg.norm(gH, axis=1) * np.linalg.norm(gK, axis=1)
    res = np.abs(br) / norm
    return make_report(test, res, tol, X, [s.name for s in chart.variables], params)


def independence_rank(funcs, chart, points=None, sampler=None, n=200, rel=1e-8, fraction=0.95, test="independence"):
    """Jacobian rank of funcs at each point (SVD threshold rel * sigma_max)."""
    if len(funcs) < 2:
        raise ValueError("need at least two functions")
    f = gradient_fn(list(funcs), chart)
    if points is None:
        sampler = sampler or Sampler()
        probe = lambda *cols: list(np.moveaxis(f(np.stack(cols, 1))[0], -1, 0))
        points = sampler.points(chart, n, probe=probe)
    _, J = f(points)
    # rows are rescaled to unit length: the rank is unchanged and high-degree
    # integrals no longer swamp the relative singular-value threshold
    nr = np.linalg.norm(J, axis=2, keepdims=True)
    J = np.where(nr > 0, J / np.where(nr > 0, nr, 1), 0)
    sv = np.linalg.svd(J, compute_uv=False)
    ranks = (sv > rel * sv[:, :1]).sum(1)
    target = len(funcs)
    frac = float(np.mean(ranks == target))
    vals, counts = np.unique(ranks, return_counts=True)
    modal = int(vals[np.argmax(counts)])
    verdict = "pass" if frac >= fraction else "fail"
    return VerificationReport(test, len(ranks), {"max": int(ranks.max()), "mean": float(ranks.mean()), "rms": float(np.sqrt((ranks ** 2).mean()))},
                              fraction, verdict, [], {}, {"min_rank": int(ranks.min()), "modal_rank": modal, "full_rank_fraction": frac})


# ---------------------------------------------------------------- trajectories

@dataclass
class Trajectory:
    t: np.ndarray
    y: np.ndarray               # (len(t), 2N)
    monitors: np.ndarray        # (len(t), n_monitors)
    names: list
    monitor_names: list
    meta: dict

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + self.names + self.monitor_names)
            for i in range(len(self.t)):
                w.writerow([repr(float(self.t[i]))] + [repr(float(v)) for v in self.y[i]] + [repr(float(v)) for v in self.monitors[i]])

    def drift(self, j=0, relative=True):
        m = self.monitors[:, j]
        d = np.abs(m - m[0])
        if relative:
            d = d / max(np.abs(m).max(), 1e-300)
        return float(d.max())


def hamilton_rhs(H, chart):
    syms = chart.variables
    n = len(chart.pairs)
    eqs = [sp.diff(H, p) for p in chart.momenta] + [-sp.diff(H, q) for q in chart.coords]
    fn = sp.lambdify(syms, eqs, modules="numpy", cse=True)
    return lambda t, y: np.array(fn(*y), dtype=float)


def _singular_at_origin(H):
    """True when H blows up on u = 0 (gamma pole or Omega/gamma^2 term)."""
    try:
        v = sp.sympify(H).subs(U, 0)
    except (ZeroDivisionError, ValueError):
        return True
    return v.has(sp.zoo, sp.oo, -sp.oo, sp.nan)


def integrate(H, start, t_end, chart, monitors=(), rtol=1e-12, atol=1e-12, method="DOP853",
              n_out=2001, u_min=1e-3, max_step=np.inf):
    """Adaptive explicit Runge-Kutta (DOP853) on Hamilton's equations."""
    syms = chart.variables
    y0 = np.array([start[s] if s in start else start[s.name] for s in syms], dtype=float)
    rhs = hamilton_rhs(H, chart)
    events = []
    if chart.extended and _singular_at_origin(H):
        iu = syms.index(U)

        def pole(t, y):
            return abs(y[iu]) - u_min
        pole.terminal = True

        def crossing(t, y):
            # a single large step can jump over the |u| < u_min band
            return y[iu]
        crossing.terminal = True
        events += [pole, crossing]

    def bad(t, y):
        return 1.0 if np.all(np.isfinite(y)) and np.abs(y).max() < 1e8 else -1.0
    bad.terminal = True
    events.append(bad)
    t_eval = np.linspace(0, t_end, n_out)
    sol = solve_ivp(rhs, (0, t_end), y0, method=method, rtol=rtol, atol=atol, t_eval=t_eval,
                    events=events, dense_output=True, max_step=max_step)
    truncated = sol.status == 1
    mons = list(monitors)
    mon = np.zeros((len(sol.t), len(mons)))
    if mons:
        f = numeric(mons, syms)
        mon = np.stack(f(*sol.y), axis=1)
    meta = {"method": method, "rtol": rtol, "atol": atol, "nfev": int(sol.nfev), "truncated": bool(truncated),
            "status": sol.message}
    traj = Trajectory(sol.t, sol.y.T, mon, [s.name for s in syms], [f"I{j}" for j in range(len(mons))], meta)
    traj.sol = sol
    return traj


def phase_scale(y0):
    return max(1.0, float(np.linalg.norm(y0)))


def orbit_closure(H, start, chart, t_max=200.0, eps=1e-4, rtol=1e-12, atol=1e-12, leave=0.1, test="orbit-closure",
                  k=None):
    """Detect a return of the phase point within eps (relative to |y0|) before t_max."""
    traj = integrate(H, start, t_max, chart, rtol=rtol, atol=atol, n_out=max(20001, int(t_max * 200)))
    y0 = traj.y[0]
    sc = phase_scale(y0)
    if traj.meta["truncated"]:
        return VerificationReport(test, len(traj.t), summarize([np.inf]), eps, "fail",
                                  [{"reason": "trajectory truncated (singularity or unbounded)"}], {"k": str(k)})
    d = np.linalg.norm(traj.y - y0, axis=1) / sc
    left = np.nonzero(d > leave)[0]
    best = (np.inf, None)
    if left.size:
        i0 = left[0]
        dd = d[i0:]
        mins = np.nonzero((dd[1:-1] <= dd[:-2]) & (dd[1:-1] <= dd[2:]))[0] + 1 + i0
        for i in mins:
            if d[i] > 50 * eps + 0.05:
                continue
            a, b = traj.t[i - 1], traj.t[min(i + 1, len(traj.t) - 1)]
            r = minimize_scalar(lambda t: np.linalg.norm(traj.sol.sol(t) - y0) / sc, bounds=(a, b),
                                method="bounded", options={"xatol": 1e-12})
            if r.fun < best[0]:
                best = (float(r.fun), float(r.x))
            if r.fun < eps:
                break
    dist, period = best
    verdict = "pass" if dist < eps else "fail"
    return VerificationReport(test, len(traj.t), {"max": dist, "mean": dist, "rms": dist}, eps, verdict, [],
                              {"k": str(k)}, {"period": period, "return_distance": dist})


def single_valuedness(K, angular_var, period, chart, points=None, sampler=None, n=100, tol=1e-10, test="single-valuedness"):
    syms = chart.variables
    f = numeric(K, syms)
    if points is None:
        sampler = sampler or Sampler()
        points = sampler.points(chart, n, probe=lambda *c: f(*c))
    X = np.array(points, dtype=float)
    j = [s.name for s in syms].index(str(angular_var))
    Y = X.copy()
    Y[:, j] += period
    a, b = f(*X.T), f(*Y.T)
    res = np.abs(a - b) / np.maximum(1.0, np.abs(a))
    return make_report(test, res, tol, X, [s.name for s in syms], {"period": period}, probabilistic=False)
