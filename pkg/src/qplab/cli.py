"""Command-line front end.

    qplab <command> --config <path> [--out <dir>] [--threads <k>]

Each run writes ``<command>.csv`` (or several CSVs) and
``config.resolved.json`` (the validated configuration with defaults
filled in, plus the package version) to the output directory.

Exit codes: 0 success, 2 configuration error, 3 numerical-quality failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .acceleration import classify_profiles, default_eps_grid, sample_profiles
from .arithmetic import Frequency, cf_expand, make_liouville
from .cocycles import TrigPolynomial
from .cohomology import AnalyticObservable, solve_truncated
from .duality import dual_lyapunov
from .errors import ConvergenceError, NumericalQualityError, QplabError
from .kotani import johnson_moser_residual, reflectionless_residual
from .spectrum import detect_and_label_gaps, schrodinger_bands, truncated_spectrum

COMMANDS = ("butterfly", "profile", "classify", "dual", "spectrum", "kotani", "cohomology")
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class ConfigError(Exception):
    def __init__(self, path: str, msg: str):
        super().__init__(f"{path}: {msg}" if path else msg)
        self.path = path


# --- schema ----------------------------------------------------------------

def _num(path, x, lo=None, hi=None, integer=False, lo_open=False):
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ConfigError(path, f"expected a number, got {x!r}")
    if integer and not float(x).is_integer():
        raise ConfigError(path, f"expected an integer, got {x!r}")
    if lo is not None and (x < lo or (lo_open and x == lo)):
        raise ConfigError(path, f"must be {'>' if lo_open else '>='} {lo}, got {x}")
    if hi is not None and x > hi:
        raise ConfigError(path, f"must be <= {hi}, got {x}")
    return int(x) if integer else float(x)


def _num_list(path, xs, **kw):
    if not isinstance(xs, list) or not xs:
        raise ConfigError(path, "expected a non-empty list of numbers")
    return [_num(f"{path}[{i}]", x, **kw) for i, x in enumerate(xs)]


def _check_keys(path, obj, allowed):
    if not isinstance(obj, dict):
        raise ConfigError(path, "expected an object")
    for k in obj:
        if k not in allowed:
            where = f"{path}.{k}" if path else k
            raise ConfigError(where, f"unknown key {k!r}")


POTENTIAL_KEYS = {
    "amo": {"family", "lambda", "strip_width"},
    "extended_harper": {"family", "a", "b", "strip_width"},
    "free": {"family", "strip_width"},
    "fourier": {"family", "coeffs", "strip_width"},
}


def _potential(spec):
    if not isinstance(spec, dict) or "family" not in spec:
        raise ConfigError("potential", "expected an object with a 'family' key")
    fam = spec["family"]
    if fam not in POTENTIAL_KEYS:
        raise ConfigError("potential.family", f"unknown family {fam!r}; choose from {sorted(POTENTIAL_KEYS)}")
    _check_keys("potential", spec, POTENTIAL_KEYS[fam])
    out = {"family": fam, "strip_width": _num("potential.strip_width", spec.get("strip_width", 1.5),
                                              lo=0, lo_open=True)}
    if fam == "amo":
        out["lambda"] = _num("potential.lambda", spec.get("lambda", 1.0))
    elif fam == "extended_harper":
        out["a"] = _num("potential.a", spec.get("a", 3.0))
        out["b"] = _num("potential.b", spec.get("b", 0.3))
    elif fam == "fourier":
        co = spec.get("coeffs")
        if not isinstance(co, dict) or not co:
            raise ConfigError("potential.coeffs", "expected an object {\"k\": value}")
        clean = {}
        for k, val in co.items():
            try:
                kk = int(k)
            except ValueError:
                raise ConfigError(f"potential.coeffs.{k}", "mode index must be an integer") from None
            if isinstance(val, list) and len(val) == 2:
                clean[str(kk)] = [_num(f"potential.coeffs.{k}[0]", val[0]), _num(f"potential.coeffs.{k}[1]", val[1])]
            else:
                clean[str(kk)] = _num(f"potential.coeffs.{k}", val)
        out["coeffs"] = dict(sorted(clean.items(), key=lambda kv: int(kv[0])))
    return out


def build_potential(p: dict) -> TrigPolynomial:
    h = p["strip_width"]
    fam = p["family"]
    if fam == "amo":
        return TrigPolynomial.cosine(p["lambda"], strip_width=h)
    if fam == "extended_harper":
        return TrigPolynomial.extended_harper(p["a"], p["b"], strip_width=h)
    if fam == "free":
        return TrigPolynomial.zero(strip_width=h)
    coeffs = {int(k): (complex(*val) if isinstance(val, list) else val) for k, val in p["coeffs"].items()}
    try:
        return TrigPolynomial(coeffs, strip_width=h)
    except QplabError as exc:
        raise ConfigError("potential.coeffs", str(exc)) from None


def _frequency(spec):
    if spec in ("golden", "silver"):
        return spec
    if not isinstance(spec, dict) or len(spec) != 1:
        raise ConfigError("frequency", "expected 'golden', 'silver' or one of "
                          "{value}, {rational: [p, q]}, {liouville: {beta, terms}}")
    (kind, val), = spec.items()
    if kind == "value":
        return {"value": _num("frequency.value", val, lo=0, hi=1, lo_open=True)}
    if kind == "rational":
        if not isinstance(val, list) or len(val) != 2:
            raise ConfigError("frequency.rational", "expected [p, q]")
        return {"rational": [_num("frequency.rational[0]", val[0], lo=1, integer=True),
                             _num("frequency.rational[1]", val[1], lo=2, integer=True)]}
    if kind == "liouville":
        _check_keys("frequency.liouville", val, {"beta", "terms"})
        return {"liouville": {"beta": _num("frequency.liouville.beta", val.get("beta", 1.0), lo=0, lo_open=True),
                              "terms": _num("frequency.liouville.terms", val.get("terms", 4),
                                            lo=2, hi=12, integer=True)}}
    raise ConfigError(f"frequency.{kind}", f"unknown key {kind!r}")


def build_frequency(f):
    """Frequency and its continued fraction expansion."""
    try:
        if f == "golden":
            a = Frequency.golden()
        elif f == "silver":
            a = Frequency.silver()
        elif "value" in f:
            a = Frequency.from_value(f["value"])
        elif "rational" in f:
            a = Frequency.rational(*f["rational"])
        else:
            lv = make_liouville(f["liouville"]["beta"], f["liouville"]["terms"])
            return lv.frequency, lv.cf
    except QplabError as exc:
        raise ConfigError("frequency", str(exc)) from None
    return a, cf_expand(a)


def _psi(spec):
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError("psi", "expected an object with a 'kind' key")
    kind = spec["kind"]
    allowed = {"cosine": {"kind", "amplitude", "h"}, "geometric": {"kind", "rate", "h"},
               "modes": {"kind", "modes", "h"}}
    if kind not in allowed:
        raise ConfigError("psi.kind", f"unknown kind {kind!r}")
    _check_keys("psi", spec, allowed[kind])
    out = {"kind": kind, "h": _num("psi.h", spec.get("h", 0.5), lo=0, lo_open=True)}
    if kind == "cosine":
        out["amplitude"] = _num("psi.amplitude", spec.get("amplitude", 1.0))
    elif kind == "geometric":
        out["rate"] = _num("psi.rate", spec.get("rate", 0.02), lo=0, lo_open=True)
    else:
        m = spec.get("modes")
        if not isinstance(m, dict) or not m:
            raise ConfigError("psi.modes", "expected an object {\"j\": value}")
        out["modes"] = {str(int(k)): _num(f"psi.modes.{k}", v) for k, v in m.items()}
    return out


def build_psi(p) -> AnalyticObservable:
    try:
        if p["kind"] == "cosine":
            return AnalyticObservable.cosine(p["amplitude"], p["h"])
        if p["kind"] == "geometric":
            return AnalyticObservable.geometric(p["rate"], p["h"])
        return AnalyticObservable.from_modes({int(k): v for k, v in p["modes"].items()}, p["h"])
    except QplabError as exc:
        raise ConfigError("psi", str(exc)) from None


# command -> {key: (default, validator)}; validators take (path, value)
def _pos_int(lo=1, hi=None):
    return lambda path, x: _num(path, x, lo=lo, hi=hi, integer=True)


def _pos(path, x):
    return _num(path, x, lo=0, lo_open=True)


def _energies(path, x):
    return None if x is None else _num_list(path, x)


def _eps(path, x):
    return None if x is None else _num_list(path, x, lo=0)


def _complex_list(path, xs):
    if not isinstance(xs, list) or not xs:
        raise ConfigError(path, "expected a non-empty list of [re, im] pairs")
    out = []
    for i, z in enumerate(xs):
        if not isinstance(z, list) or len(z) != 2:
            raise ConfigError(f"{path}[{i}]", "expected [re, im]")
        out.append([_num(f"{path}[{i}][0]", z[0]), _num(f"{path}[{i}][1]", z[1], lo=0, lo_open=True)])
    return out


def _choice(*opts):
    def f(path, x):
        if x not in opts:
            raise ConfigError(path, f"expected one of {list(opts)}, got {x!r}")
        return x
    return f


COMMON = {"frequency": ("golden", lambda p, x: _frequency(x)),
          "seed": (0, _pos_int(lo=0))}
WITH_POT = {"potential": (None, lambda p, x: _potential(x))}

SCHEMA = {
    "butterfly": {**WITH_POT, "q_max": (20, _pos_int(2, 2000))},
    "profile": {**WITH_POT, "energies": (None, _energies), "eps_grid": (None, _eps),
                "n": (10_000, _pos_int(100)), "phases": (32, _pos_int(2))},
    "classify": {**WITH_POT, "energies": (None, _energies), "energy_count": (30, _pos_int(1)),
                 "N": (400, _pos_int(10)), "spectrum_phases": (4, _pos_int(1)),
                 "eps_grid": (None, _eps), "n": (10_000, _pos_int(100)), "phases": (32, _pos_int(2)),
                 "slope_tol": (0.1, _pos), "noise_floor": (1e-3, _pos), "penalty": (25.0, _pos)},
    "dual": {**WITH_POT, "energies": (None, _energies), "n": (10_000, _pos_int(100)),
             "phases": (16, _pos_int(2)), "simplicity_floor": (0.01, _pos)},
    "spectrum": {**WITH_POT, "N": (600, _pos_int(10)), "phases": (8, _pos_int(1)),
                 "k_max": (30, _pos_int(1)), "min_gap": (1e-3, _pos), "label_tol": (5e-3, _pos)},
    "kotani": {**WITH_POT, "table": ("reflectionless", _choice("reflectionless", "johnson_moser")),
               "energies": (None, _energies), "deltas": ([1e-2, 1e-3], lambda p, x: _num_list(p, x, lo=1e-6)),
               "z": (None, lambda p, x: None if x is None else _complex_list(p, x)),
               "n": (10_000, _pos_int(100)), "phases": (4, _pos_int(1)), "n_tail": (600, _pos_int(10))},
    "cohomology": {"psi": (None, lambda p, x: _psi(x)),
                   "k_indices": (None, lambda p, x: [int(v) for v in _num_list(p, x, lo=0, integer=True)])},
}
REQUIRED = {
    "butterfly": ("potential",), "profile": ("potential", "energies"), "classify": ("potential",),
    "dual": ("potential", "energies"), "spectrum": ("potential",), "kotani": ("potential",),
    "cohomology": ("psi", "k_indices"),
}


@dataclass
class RunConfig:
    command: str
    resolved: dict
    values: dict = field(repr=False, default_factory=dict)

    @property
    def x0(self) -> float:
        """Phase offset derived from the seed (seed 0 -> 0)."""
        return math.fmod(self.resolved["seed"] * GOLDEN, 1.0)


def parse_config(text: str, command: str) -> RunConfig:
    if command not in SCHEMA:
        raise ConfigError("command", f"unknown command {command!r}")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"invalid JSON: {exc}") from None
    schema = {**COMMON, **SCHEMA[command]}
    _check_keys("", raw, set(schema))
    resolved = {}
    for key, (default, check) in schema.items():
        if key in raw:
            resolved[key] = check(key, raw[key])
        elif key in REQUIRED[command]:
            raise ConfigError(key, "required key missing")
        else:
            resolved[key] = default if default is None else check(key, default)
    values = {}
    if "potential" in resolved:
        values["v"] = build_potential(resolved["potential"])
        grid = resolved.get("eps_grid")
        h = values["v"].strip_width
        if grid is not None:
            if any(e >= h for e in grid):
                raise ConfigError("eps_grid", f"values must be below strip_width={h}")
            if len(grid) < 8 or any(b <= a for a, b in zip(grid, grid[1:])):
                raise ConfigError("eps_grid", "needs at least 8 strictly increasing values")
        if command in ("dual",) and values["v"].degree < 1:
            raise ConfigError("potential", "dual cocycle needs a non-constant potential")
        if command == "kotani" and resolved["table"] == "johnson_moser":
            if values["v"].degree < 1:
                raise ConfigError("potential", "dual data needs a non-constant potential")
            if resolved["z"] is None:
                raise ConfigError("z", "required for table 'johnson_moser'")
            if any(im < 0.05 for _, im in resolved["z"]):
                raise ConfigError("z", "Im z must be >= 0.05")
    if "psi" in resolved:
        values["psi"] = build_psi(resolved["psi"])
    values["alpha"], values["cf"] = build_frequency(resolved["frequency"])
    return RunConfig(command, resolved, values)


# --- output ------------------------------------------------------------------

def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(c) for c in r])


def _chunks(items, k):
    k = max(1, min(k, len(items)))
    size = math.ceil(len(items) / k)
    return [items[i:i + size] for i in range(0, len(items), size)]


def _pmap(fn, items, threads):
    """Apply fn to contiguous chunks in parallel; results keep input order."""
    if not items:
        return []
    chunks = _chunks(list(items), threads)
    if len(chunks) == 1:
        return list(fn(chunks[0]))
    with ThreadPoolExecutor(max_workers=len(chunks)) as ex:
        parts = list(ex.map(lambda c: list(fn(c)), chunks))
    return [r for part in parts for r in part]


# --- commands ----------------------------------------------------------------

def _sampled_energies(cfg: RunConfig, N: int, phases: int, count: int):
    """Explicit energies, or ``count`` points spread evenly (in index) over
    the trimmed truncation spectrum."""
    r = cfg.resolved
    if r.get("energies") is not None:
        return list(r["energies"])
    sp = truncated_spectrum(cfg.values["v"], cfg.values["alpha"], N, phases, cfg.x0)
    pts = np.sort(sp.points)
    idx = np.linspace(0, pts.size - 1, count).round().astype(int)
    return [float(e) for e in pts[idx]]


def run_butterfly(cfg, out: Path, threads: int):
    v = cfg.values["v"]
    pairs = [(p, q) for q in range(2, cfg.resolved["q_max"] + 1) for p in range(1, q) if math.gcd(p, q) == 1]

    def work(chunk):
        rows = []
        for p, q in chunk:
            bands = schrodinger_bands(v, (p, q), 1, cfg.x0).meta["per_phase_bands"][0]
            rows.extend((p, q, i, lo, hi) for i, (lo, hi) in enumerate(bands))
        return rows

    write_csv(out / "butterfly.csv", ["p", "q", "band_index", "E_left", "E_right"], _pmap(work, pairs, threads))


def _acc_config(cfg):
    r = cfg.resolved
    grid = r["eps_grid"] if r["eps_grid"] is not None else list(default_eps_grid(cfg.values["v"].strip_width))
    return grid, r["n"], r["phases"]


def run_profile(cfg, out: Path, threads: int):
    grid, n, P = _acc_config(cfg)
    v, a = cfg.values["v"], cfg.values["alpha"]

    def work(chunk):
        rows = []
        for prof in sample_profiles(v, a, chunk, grid, n, P, cfg.x0):
            rows.extend((prof.E, e, L, s) for e, L, s in zip(prof.eps_samples, prof.L_samples, prof.stderrs))
        return rows

    write_csv(out / "profile.csv", ["E", "eps", "L", "stderr"], _pmap(work, cfg.resolved["energies"], threads))


def run_classify(cfg, out: Path, threads: int):
    r = cfg.resolved
    grid, n, P = _acc_config(cfg)
    v, a = cfg.values["v"], cfg.values["alpha"]
    Es = _sampled_energies(cfg, r["N"], r["spectrum_phases"], r["energy_count"])

    def work(chunk):
        profs = sample_profiles(v, a, chunk, grid, n, P, cfg.x0)
        return classify_profiles(profs, r["slope_tol"], max(1, v.degree), r["noise_floor"], r["penalty"])

    recs = _pmap(work, Es, threads)
    write_csv(out / "classify.csv", ["E", "omega", "omega_bar", "is_type1", "quantization_flag"],
              [(x.E, x.omega, x.omega_bar, x.is_type1, x.quantization_flag) for x in recs])


def run_dual(cfg, out: Path, threads: int):
    r = cfg.resolved
    v, a = cfg.values["v"], cfg.values["alpha"]
    d = v.degree

    def work(chunk):
        return dual_lyapunov(v, a, np.array(chunk), r["n"], r["phases"],
                             simplicity_floor=r["simplicity_floor"], x0=cfg.x0)

    recs = _pmap(work, r["energies"], threads)
    header = ["E"] + [f"gamma_{i + 1}" for i in range(d)] + ["gap12", "simple"]
    write_csv(out / "dual.csv", header, [(x.E, *x.gammas, x.gap12, x.simple) for x in recs])


def run_spectrum(cfg, out: Path, threads: int):
    r = cfg.resolved
    v, a = cfg.values["v"], cfg.values["alpha"]
    sp = truncated_spectrum(v, a, r["N"], r["phases"], cfg.x0)
    gaps = detect_and_label_gaps(sp, a, r["k_max"], r["min_gap"], r["label_tol"])
    write_csv(out / "spectrum_points.csv", ["E"], [(e,) for e in np.sort(sp.points)])
    write_csv(out / "spectrum_gaps.csv", ["E_left", "E_right", "ids", "label", "residual"],
              [(g.left, g.right, g.ids, g.label, g.residual) for g in gaps.gaps])


def run_kotani(cfg, out: Path, threads: int):
    r = cfg.resolved
    v, a = cfg.values["v"], cfg.values["alpha"]
    if r["table"] == "reflectionless":
        Es = _sampled_energies(cfg, 400, 4, 20)

        def work(chunk):
            rep = reflectionless_residual(v, a, chunk, r["deltas"], r["phases"], cfg.x0)
            return [(E, dl, rep.residuals[i, j]) for j, E in enumerate(rep.energies)
                    for i, dl in enumerate(rep.deltas)]

        write_csv(out / "kotani.csv", ["E", "delta", "residual"], _pmap(work, Es, threads))
    else:
        def work(chunk):
            rows = []
            for re_, im in chunk:
                j = johnson_moser_residual(v, a, complex(re_, im), n=r["n"], phases=r["phases"],
                                           n_tail=r["n_tail"], x0=cfg.x0)
                rows.append((re_, im, j.lhs, j.rhs, j.residual))
            return rows

        write_csv(out / "kotani.csv", ["re_z", "im_z", "lhs", "rhs", "residual"], _pmap(work, r["z"], threads))


def run_cohomology(cfg, out: Path, threads: int):
    psi, a, cf = cfg.values["psi"], cfg.values["alpha"], cfg.values["cf"]
    rows = []
    for k in cfg.resolved["k_indices"]:
        _, rep = solve_truncated(psi, a, cf, k)
        rows.append((rep.index, rep.q_n, rep.q_next, rep.N, rep.retained, rep.in_regime, rep.psi_norm,
                     rep.g_norm, rep.g_norm_sup, rep.g_bound, rep.residual_norm, rep.residual_bound,
                     rep.coefficient_error, rep.passed))
    write_csv(out / "cohomology.csv",
              ["index", "q_n", "q_next", "N", "retained", "in_regime", "psi_norm", "g_norm", "g_norm_sup",
               "g_bound", "residual_norm", "residual_bound", "coefficient_error", "passed"], rows)


RUNNERS = {"butterfly": run_butterfly, "profile": run_profile, "classify": run_classify, "dual": run_dual,
           "spectrum": run_spectrum, "kotani": run_kotani, "cohomology": run_cohomology}


def _threads(arg) -> int:
    if arg is not None:
        return max(1, int(arg))
    env = os.environ.get("QPLAB_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError("QPLAB_THREADS", f"expected an integer, got {env!r}") from None
    return 1


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="qplab", description="Quasi-periodic operator experiments.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="JSON configuration file")
    ap.add_argument("--out", default="qplab_out", help="output directory")
    ap.add_argument("--threads", type=int, default=None, help="worker threads (default: $QPLAB_THREADS or 1)")
    args = ap.parse_args(argv)
    try:
        text = Path(args.config).read_text()
        cfg = parse_config(text, args.command)
        threads = _threads(args.threads)
    except ConfigError as exc:
        print(f"qplab: config error at {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"qplab: cannot read config: {exc}", file=sys.stderr)
        return 2
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    echo = {"version": __version__, "command": args.command, "config": cfg.resolved}
    (out / "config.resolved.json").write_text(json.dumps(echo, indent=2, sort_keys=True) + "\n")
    try:
        RUNNERS[args.command](cfg, out, threads)
    except (NumericalQualityError, ConvergenceError) as exc:
        print(f"qplab: numerical quality failure: {exc}", file=sys.stderr)
        return 3
    except ConfigError as exc:
        print(f"qplab: config error at {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
