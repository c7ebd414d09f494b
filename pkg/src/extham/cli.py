"""extham command line: extend | verify | orbit | quantum | catalog-list.

Exit codes: 0 pass, 1 usage/parse error, 2 invalid seed, 3 verification
failure, 4 unsupported regime.
"""
import argparse
import configparser
import json
import os
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
import sympy as sp

from . import catalog, quantum_ladder as ql
from .extension_core import (ExtensionSpec, SeedError, SeedSystem, build_extended, check_extension_condition,
                             k_integral, kbar_integral)
from .phase_expr import Chart, ParseError, parse, to_text
from .verification import (DEFAULT_K_SWEEP, DEFAULT_SEED, Sampler, VerificationReport, bracket_residual,
                           independence_rank, integrate, orbit_closure, single_valuedness)

EXIT_OK, EXIT_USAGE, EXIT_SEED, EXIT_FAIL, EXIT_UNSUPPORTED = 0, 1, 2, 3, 4


class CliError(Exception):
    def __init__(self, msg, code=EXIT_USAGE, payload=None):
        super().__init__(msg)
        self.code = code
        self.payload = payload


@dataclass
class JobConfig:
    command: str
    catalog: str = None
    definition: str = None
    m: int = 1
    n: int = 1
    omega: Fraction = None
    C: Fraction = None
    hbar: Fraction = Fraction(1)
    seed: int = DEFAULT_SEED
    tol: float = None
    out: Path = Path(".")
    extra: dict = field(default_factory=dict)


@dataclass
class System:
    name: str
    seed: SeedSystem = None
    spec: ExtensionSpec = None
    H: object = None
    chart: Chart = None
    angular: tuple = ()


# ---------------------------------------------------------------- definitions

_RESERVED_CONST = ("c", "c0", "ladder")


def read_definition(path):
    """Seed from a definition file with sections [chart], [metric], [potential], [G], [constants].

    [chart] dim = N; [metric] gij = expr (i <= j, missing entries are 0);
    [potential] V = expr; [G] G = expr; [constants] c, c0, ladder (the
    constant c1 of the ladder condition) and any parameter bindings."""
    cp = configparser.ConfigParser()
    cp.optionxform = str
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except (OSError, configparser.Error) as e:
        raise CliError(f"{path}: {e}") from e
    for sec in ("chart", "metric", "potential", "G"):
        if not cp.has_section(sec):
            raise CliError(f"{path}: missing section [{sec}]")
    try:
        dim = int(cp["chart"].get("dim", "1"))
    except ValueError as e:
        raise CliError(f"{path}: [chart] dim must be an integer") from e
    if dim < 1:
        raise CliError(f"{path}: [chart] dim must be positive")
    ch = Chart(dim)
    consts = dict(cp["constants"]) if cp.has_section("constants") else {}

    def ex(sec, key, text, chart=ch):
        try:
            return parse(text, chart)
        except ParseError as e:
            raise CliError(f"{path}: [{sec}] {key}: {e}\n    {text}\n    {' ' * e.pos}^") from e

    binds = {}
    for k, v in consts.items():
        if k not in _RESERVED_CONST:
            binds[sp.Symbol(k, real=True)] = ex("constants", k, v)
    num = {k: ex("constants", k, consts[k]).subs(binds) if k in consts else None for k in _RESERVED_CONST}
    g = sp.zeros(dim, dim)
    for key, text in cp["metric"].items():
        if len(key) != 3 or key[0] != "g" or not key[1:].isdigit():
            raise CliError(f"{path}: [metric] unknown key {key!r} (expected gij)")
        i, j = int(key[1]) - 1, int(key[2]) - 1
        if not (0 <= i < dim and 0 <= j < dim):
            raise CliError(f"{path}: [metric] {key} outside dimension {dim}")
        g[i, j] = g[j, i] = ex("metric", key, text).subs(binds)
    if "V" not in cp["potential"]:
        raise CliError(f"{path}: [potential] needs V")
    if "G" not in cp["G"]:
        raise CliError(f"{path}: [G] needs G")
    V = ex("potential", "V", cp["potential"]["V"]).subs(binds)
    G = ex("G", "G", cp["G"]["G"]).subs(binds)
    try:
        return SeedSystem(ch, g, V, G, num["c"] if num["c"] is not None else 1, num["c0"] or 0,
                          num["ladder"] or 0, name=Path(path).stem)
    except SeedError as e:
        raise CliError(f"{path}: {e}", EXIT_SEED) from e


def _frac(text):
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError) as e:
        raise argparse.ArgumentTypeError(f"not a rational number: {text!r}") from e


def _rat(x):
    return sp.Rational(x.numerator, x.denominator)


def resolve(cfg):
    """System from --catalog / --def and the numeric flags."""
    m, n = cfg.m, cfg.n
    Om = cfg.omega
    if cfg.catalog:
        name = cfg.catalog
        if name in catalog.REGISTRY:
            kw = {"m": m, "n": n}
            if Om is not None:
                kw["Omega"] = _rat(Om)
            e = catalog.get(name, **kw)
            spec = e.spec
            if spec is not None and cfg.C is not None:
                spec = ExtensionSpec(spec.m, spec.n, spec.Omega, _rat(cfg.C), spec.shift)
            H = build_extended(e.seed, spec) if e.seed is not None else e.H
            return System(name, e.seed, spec, H, e.chart, tuple(e.angular))
        if name in catalog.SEEDS:
            seed = catalog.SEEDS[name]()
        else:
            raise CliError(f"unknown catalog name {name!r}; see `extham catalog-list`")
    else:
        seed = read_definition(cfg.definition)
    spec = ExtensionSpec(m, n, _rat(Om) if Om is not None else 0, _rat(cfg.C) if cfg.C is not None else 0)
    angular = tuple(q.name for q in seed.chart.q if _looks_angular(seed, q))
    return System(seed.name or "definition", seed, spec, build_extended(seed, spec), seed.chart.extend(), angular)


def _looks_angular(seed, q):
    exprs = [seed.V, seed.G] + list(seed.g)
    return any(a.has(q) for e in exprs for a in e.atoms(sp.sin, sp.cos))


def _sampler(system, cfg):
    return Sampler(avoid_sin=system.angular, seed=cfg.seed)


def _write(path, text):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _dump(obj):
    return json.dumps(obj, indent=2, sort_keys=True, default=str) + "\n"


# ---------------------------------------------------------------- commands

def _require_seed(system):
    if system.seed is None:
        raise CliError(f"{system.name} is not built from an extension seed", EXIT_UNSUPPORTED)
    r, z = check_extension_condition(system.seed)
    if not z:
        raise CliError("seed fails the extension condition", EXIT_SEED,
                       {"test": "extension-condition", "verdict": "fail", "residual": to_text(r),
                        "witnesses": [z.witness]})


def integral_for(system):
    if system.spec.Omega == 0:
        return k_integral(system.seed, system.spec)
    return kbar_integral(system.seed, system.spec)


def cmd_extend(cfg):
    system = resolve(cfg)
    _require_seed(system)
    K = integral_for(system)
    out = cfg.out
    _write(out / "H.txt", to_text(system.H) + "\n")
    _write(out / "K.txt", to_text(K.expr) + "\n")
    meta = {"system": system.name, "m": system.spec.m, "n": system.spec.n, "k": str(system.spec.k),
            "Omega": str(system.spec.Omega), "C": str(system.spec.C), "route": K.route,
            "momentum_degree": K.momentum_degree, "indices": [K.m, K.n],
            "variables": [s.name for s in system.chart.variables]}
    _write(out / "meta.json", _dump(meta))
    print(f"route {K.route}, momentum degree {K.momentum_degree}; wrote {out / 'H.txt'}, {out / 'K.txt'}, {out / 'meta.json'}")
    return EXIT_OK


def default_start(system):
    pt = {}
    for q in system.chart.coords:
        pt[q.name] = 1.0 if q.name == "u" else 1.2
    for p in system.chart.momenta:
        pt[p.name] = 0.2 if p.name == "pu" else 0.3
    return pt


def _parse_point(text, chart):
    pt = {}
    for part in text.split(","):
        if not part.strip():
            continue
        k, _, v = part.partition("=")
        k = k.strip()
        if k not in [s.name for s in chart.variables]:
            raise CliError(f"unknown variable {k!r} in start point")
        try:
            pt[k] = float(v)
        except ValueError as e:
            raise CliError(f"bad value in start point: {part!r}") from e
    missing = [s.name for s in chart.variables if s.name not in pt]
    if missing:
        raise CliError(f"start point misses {', '.join(missing)}")
    return pt


def battery(system, cfg, K=None, H=None):
    """Bracket, independence, drift and single-valuedness reports for one system."""
    H = system.H if H is None else H
    K = integral_for(system).expr if K is None else K
    ch = system.chart
    samp = _sampler(system, cfg)
    tol = cfg.tol or 1e-9
    reps = [bracket_residual(H, K, ch, samp, n=100, tol=tol, params={"k": str(system.spec.k)})]
    reps.append(independence_rank([H, system.seed.L, K], ch, sampler=samp, n=200))
    start = cfg.extra.get("start") or default_start(system)
    tr = integrate(H, start, 20.0, ch, monitors=[H, K])
    d = tr.drift(1)
    reps.append(VerificationReport("K-drift", len(tr.t), {"max": d, "mean": d, "rms": d}, 1e-6,
                                   "pass" if d < 1e-6 and not tr.meta["truncated"] else "fail",
                                   [] if d < 1e-6 else [{"start": start, "drift": d}],
                                   {"t_end": 20.0}, {"H_drift": tr.drift(0), "truncated": tr.meta["truncated"]}))
    for a in system.angular:
        reps.append(single_valuedness(K, a, 2 * np.pi, ch, sampler=samp))
    return reps


def cmd_verify(cfg):
    ks = cfg.extra.get("sweep")
    bundle = {"command": "verify", "system": cfg.catalog or cfg.definition, "sampler_seed": cfg.seed, "runs": []}
    ok = True
    for k in ks or [None]:
        c = cfg
        if k is not None:
            c = JobConfig(**{**cfg.__dict__, "m": k.numerator, "n": k.denominator})
        system = resolve(c)
        _require_seed(system)
        Kx = Hx = None
        if cfg.extra.get("K_file"):
            Kx = _read_expr(cfg.extra["K_file"], system.chart)
        if cfg.extra.get("H_file"):
            Hx = _read_expr(cfg.extra["H_file"], system.chart)
        reps = battery(system, c, Kx, Hx)
        passed = all(r.passed for r in reps)
        ok &= passed
        bundle["runs"].append({"k": str(system.spec.k), "m": system.spec.m, "n": system.spec.n,
                               "verdict": "pass" if passed else "fail", "reports": [r.to_dict() for r in reps]})
        print(f"k={system.spec.k}: " + ", ".join(f"{r.test} {r.verdict}" for r in reps))
    bundle["verdict"] = "pass" if ok else "fail"
    _write(cfg.out / "report.json", _dump(bundle))
    return EXIT_OK if ok else EXIT_FAIL


def _read_expr(path, chart):
    try:
        text = Path(path).read_text().strip()
    except OSError as e:
        raise CliError(str(e)) from e
    try:
        return parse(text, chart)
    except ParseError as e:
        raise CliError(f"{path}: {e}") from e


def cmd_orbit(cfg):
    system = resolve(cfg)
    if cfg.extra.get("which") == "seed":
        H, ch = system.seed.L, system.seed.chart
    else:
        H, ch = system.H, system.chart
    start = _parse_point(cfg.extra["start"], ch) if cfg.extra.get("start") else \
        {k: v for k, v in default_start(system).items() if k in [s.name for s in ch.variables]}
    t_max = cfg.extra.get("t_max", 200.0)
    tr = integrate(H, start, t_max, ch, monitors=[H])
    cfg.out.mkdir(parents=True, exist_ok=True)
    tr.to_csv(cfg.out / "trajectory.csv")
    rep = orbit_closure(H, start, ch, t_max=t_max, eps=cfg.tol or 1e-4, k=system.spec.k if system.spec else None)
    rep.extra["truncated"] = tr.meta["truncated"]
    rep.extra["H_drift"] = tr.drift(0)
    _write(cfg.out / "orbit.json", _dump(rep.to_dict()))
    flag = " (truncated: pole or blow-up)" if tr.meta["truncated"] else ""
    print(f"{len(tr.t)} samples{flag}; closure {rep.verdict}, return distance {rep.stats['max']:.3e}")
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_quantum(cfg):
    system = resolve(cfg)
    if system.seed is None:
        raise CliError(f"{system.name} has no seed", EXIT_UNSUPPORTED)
    omega = cfg.omega if cfg.omega is not None else Fraction(1)
    if omega == 0:
        raise CliError("omega must be nonzero for the quantum ladder")
    hbar = _rat(cfg.hbar)
    om = _rat(omega)
    spec = system.spec
    size = cfg.extra.get("grid", 512)
    order = cfg.extra.get("order", 4)
    grid = ql.GridSpec(size, size, order=order, u_max=cfg.extra.get("u_max", 8.0))
    modes = cfg.extra.get("modes") or ql.lowest_admissible_modes(spec)
    tol = cfg.tol or 1e-4
    reports = []
    try:
        for mode in modes:
            dump = cfg.out / f"grid_{mode[0]}_{mode[1]}.csv" if cfg.extra.get("dump") else None
            if dump:
                cfg.out.mkdir(parents=True, exist_ok=True)
            reports.append(ql.warped_symmetry_residual(system.seed, spec, hbar, om, tuple(mode), grid, tol, dump=dump))
            sizes = cfg.extra.get("refine")
            if sizes:
                reports.append(ql.refinement_study(system.seed, spec, hbar, om, tuple(mode), sizes,
                                                   cfg.extra.get("refine_order", 2), grid=grid))
        control = None
        if cfg.extra.get("control", True):
            control = ql.warped_symmetry_residual(system.seed, spec, hbar, om, tuple(modes[0]),
                                                  ql.GridSpec(128, 128, order=order, u_max=grid.u_max), tol,
                                                  trial="non-eigen")
    except ql.UnsupportedBackend as e:
        raise CliError(str(e), EXIT_UNSUPPORTED) from e
    except ql.PreconditionError as e:
        raise CliError(str(e), EXIT_UNSUPPORTED) from e
    ok = all(r.passed for r in reports)
    bundle = {"command": "quantum", "system": system.name, "m": spec.m, "n": spec.n, "hbar": str(hbar),
              "omega": str(om), "c_N": str(ql.c_N(system.seed.chart.n, system.seed.c, hbar)),
              "reports": [r.to_dict() for r in reports]}
    if control is not None:
        # the control is expected to fail: X^ is a symmetry only on separated eigenfunctions
        bundle["negative_control"] = dict(control.to_dict(), expected="fail",
                                          as_expected=control.stats["max"] > 1e-1)
        ok &= control.stats["max"] > 1e-1
    bundle["verdict"] = "pass" if ok else "fail"
    _write(cfg.out / "quantum.json", _dump(bundle))
    for r in reports:
        if r.test == "refinement":
            print(f"refinement {r.params['mode']}: ratios {', '.join(f'{x:.2f}' for x in r.extra['ratios'])} {r.verdict}")
        else:
            print(f"{r.test} {r.params.get('mode')}: {r.stats['max']:.3e} {r.verdict}")
    if control is not None:
        print(f"negative control: {control.stats['max']:.3e}")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_catalog_list(cfg):
    for name in sorted(catalog.REGISTRY):
        print(f"{name:18s} entry")
    for name in sorted(catalog.SEEDS):
        print(f"{name:18s} seed")
    return EXIT_OK


# ---------------------------------------------------------------- argument parsing

def _modes(text):
    out = []
    for part in text.split(";"):
        a, _, b = part.partition(",")
        out.append((int(a), int(b or 0)))
    return out


def _ints(text):
    return [int(x) for x in text.split(",") if x]


def build_parser():
    p = argparse.ArgumentParser(prog="extham", description="Extended Hamiltonians: integrals and checks")
    sub = p.add_subparsers(dest="command", required=True)

    def system_args(sp_):
        g = sp_.add_mutually_exclusive_group(required=True)
        g.add_argument("--catalog", help="catalog entry or seed name")
        g.add_argument("--def", dest="definition", help="definition file")
        sp_.add_argument("--m", type=int, default=1)
        sp_.add_argument("--n", type=int, default=1)
        sp_.add_argument("--omega", type=_frac, default=None, help="Omega (classical) or omega (quantum)")
        sp_.add_argument("--C", type=_frac, default=None, help="constant C of the gamma equation")
        sp_.add_argument("--tol", type=float, default=None)
        sp_.add_argument("--out", type=Path, default=Path("."))

    e = sub.add_parser("extend", help="write H, K and metadata")
    system_args(e)
    v = sub.add_parser("verify", help="run the verification battery")
    system_args(v)
    v.add_argument("--sweep-k", default=None, help="comma-separated rationals, e.g. " + ",".join(DEFAULT_K_SWEEP))
    v.add_argument("--K-file", default=None)
    v.add_argument("--H-file", default=None)
    v.add_argument("--start", default=None, help="start point for the drift check, e.g. q1=1.2,p1=0.3,u=1,pu=0.2")
    o = sub.add_parser("orbit", help="integrate and probe orbit closure")
    system_args(o)
    o.add_argument("--start", default=None)
    o.add_argument("--t-max", type=float, default=200.0)
    o.add_argument("--system", dest="which", choices=("extended", "seed"), default="extended")
    q = sub.add_parser("quantum", help="warped-symmetry residuals on grids")
    system_args(q)
    q.add_argument("--hbar", type=_frac, default=Fraction(1))
    q.add_argument("--grid", type=int, default=512)
    q.add_argument("--order", type=int, choices=(2, 4), default=4)
    q.add_argument("--u-max", type=float, default=8.0)
    q.add_argument("--modes", type=_modes, default=None, help="lambda-index,E-index pairs separated by ';'")
    q.add_argument("--refine", type=_ints, default=None, help="grid sizes for the refinement study")
    q.add_argument("--refine-order", type=int, choices=(2, 4), default=2)
    q.add_argument("--no-control", action="store_true")
    q.add_argument("--dump", action="store_true", help="write X f_E grid CSVs")
    sub.add_parser("catalog-list", help="list catalog entries and seeds")
    return p


def _seed_from_env(default):
    s = os.environ.get("EXTHAM_SEED")
    if not s:
        return default
    try:
        return int(s, 0)
    except ValueError as e:
        raise CliError(f"EXTHAM_SEED is not an integer: {s!r}") from e


def config_from_args(a):
    cfg = JobConfig(a.command)
    if a.command == "catalog-list":
        return cfg
    cfg.catalog, cfg.definition = a.catalog, a.definition
    if a.m < 1 or a.n < 1:
        raise CliError("--m and --n must be positive")
    cfg.m, cfg.n, cfg.omega, cfg.C, cfg.tol, cfg.out = a.m, a.n, a.omega, a.C, a.tol, a.out
    cfg.seed = _seed_from_env(DEFAULT_SEED)
    if a.command == "verify":
        if a.sweep_k:
            try:
                ks = [Fraction(x) for x in a.sweep_k.split(",") if x]
            except (ValueError, ZeroDivisionError) as e:
                raise CliError(f"bad --sweep-k: {a.sweep_k!r}") from e
            if any(k <= 0 for k in ks):
                raise CliError("--sweep-k values must be positive")
            cfg.extra["sweep"] = ks
        cfg.extra.update(K_file=a.K_file, H_file=a.H_file)
        if a.start:
            cfg.extra["start_text"] = a.start
    if a.command == "orbit":
        cfg.extra.update(start=a.start, t_max=a.t_max, which=a.which)
    if a.command == "quantum":
        cfg.hbar = a.hbar
        cfg.extra.update(grid=a.grid, order=a.order, u_max=a.u_max, modes=a.modes, refine=a.refine,
                         refine_order=a.refine_order, control=not a.no_control, dump=a.dump)
    return cfg


COMMANDS = {"extend": cmd_extend, "verify": cmd_verify, "orbit": cmd_orbit, "quantum": cmd_quantum,
            "catalog-list": cmd_catalog_list}


def main(argv=None):
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    cfg = None
    try:
        cfg = config_from_args(a)
        if cfg.extra.get("start_text"):
            system = resolve(cfg)
            cfg.extra["start"] = _parse_point(cfg.extra.pop("start_text"), system.chart)
        return COMMANDS[cfg.command](cfg)
    except CliError as e:
        print(f"extham: {e}", file=sys.stderr)
        if e.payload is not None:
            print(_dump(e.payload), file=sys.stderr, end="")
            if cfg is not None:
                _write(cfg.out / "seed_report.json", _dump(e.payload))
        return e.code
    except (SeedError,) as e:
        print(f"extham: {e}", file=sys.stderr)
        return EXIT_SEED
    except KeyError as e:
        print(f"extham: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
