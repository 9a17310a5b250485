"""Batch runner: ``ampread <verb> --config run.toml [--set key=value ...]``.

Verbs
-----
gen-target  Monte Carlo grid values of the worst-of put (AMPX1 file)
expand      cosine expansion coefficients of a grid file (AMPX1)
canon       dense coefficients -> truncated right-canonical MPS (AMPM1)
fit         alternating circuit optimization -> MPS (AMPM1) + fidelity CSV
eval        evaluate a fitted MPS on a point set (CSV)
compare     max differences among MC, cosine expansion and MPS values (CSV)
scan-dof    sliding-block circuits over m_bl, max error vs DOF + power-law fit

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import copy
import csv
import logging
import os
import sys
import time

import numpy as np

from . import circuit, finance, fit, mps, ortho
from .numkernel import NumericalError

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger("ampread")

DEFAULTS = {
    "model": {"d": 3, "r_rf": 0.0, "sigma": 0.2, "rho": 0.0, "K": 100.0, "T": 1.0,
              "epsilon": 0.01},
    "basis": {"kind": "cosine", "D": 8, "n_gr": 8},
    "pricer": {"n_paths": 10_000, "seed": 1, "crn": True},
    "fit": {"r": 4, "n_iter": 5, "mode": "coef", "estimator": "exact", "shots": 1000,
            "seed": 0, "init": "random", "sweep": "forward", "early_stop_tol": None},
    "eval": {"points": "diagonal:101", "C": None, "sample_seed": 2},
    "compare": {"mc_at_points": False},
    "scan": {"m_bl": [2, 3, 4, 5], "window": [2, 5], "seeds": 3, "n_iter": 5},
    "output": {"target": None, "coeffs": None, "mps": None, "canon": None,
               "trace": None, "eval": None, "compare": None, "scan": None},
}


class ConfigError(ValueError):
    pass


# -- configuration -------------------------------------------------------

def _parse_value(text: str):
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def load_config(path=None, overrides=(), seed=None, threads=None) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            with open(path, "rb") as fh:
                user = tomllib.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        for sec, vals in user.items():
            if sec not in cfg or not isinstance(vals, dict):
                raise ConfigError(f"unknown config section [{sec}]")
            cfg[sec].update(vals)
    for item in overrides:
        key, sep, val = item.partition("=")
        sec, dot, name = key.strip().partition(".")
        if not sep or not dot or sec not in cfg:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        cfg[sec][name] = _parse_value(val.strip())
    if seed is not None:
        cfg["pricer"]["seed"] = seed
        cfg["fit"]["seed"] = seed
    cfg["threads"] = threads or 1
    _validate(cfg)
    return cfg


def _pow2(n, what):
    if not isinstance(n, int) or n < 1 or n & (n - 1):
        raise ConfigError(f"{what}={n} must be a power of two")


def _validate(cfg):
    m, b, f = cfg["model"], cfg["basis"], cfg["fit"]
    if int(m["d"]) < 3:
        raise ConfigError("model.d must be >= 3")
    if int(b["n_gr"]) < int(b["D"]):
        raise ConfigError("basis.n_gr must be >= basis.D")
    if int(f["n_iter"]) < 1:
        raise ConfigError("fit.n_iter must be >= 1")
    if f["mode"] not in ("coef", "full"):
        raise ConfigError(f"fit.mode must be 'coef' or 'full', got {f['mode']!r}")
    if f["estimator"] not in ("exact", "shots"):
        raise ConfigError(f"fit.estimator must be 'exact' or 'shots', got {f['estimator']!r}")


def _need_path(cfg, key, must_exist=False):
    p = cfg["output"].get(key)
    if not p:
        raise ConfigError(f"output.{key} is not set")
    if must_exist:
        if not os.path.exists(p):
            raise ConfigError(f"output.{key} = {p} does not exist (run the producing command first)")
    elif os.path.dirname(p):
        os.makedirs(os.path.dirname(p), exist_ok=True)
    return p


def make_model(cfg) -> finance.BSModel:
    m = cfg["model"]
    try:
        return finance.BSModel(int(m["d"]), float(m["r_rf"]), m["sigma"], m["rho"],
                               float(m["K"]), float(m["T"]))
    except ValueError as exc:
        raise ConfigError(f"[model]: {exc}") from exc


def make_bases(cfg, model=None, D=None):
    model = model or make_model(cfg)
    L, U = finance.domain_bounds(model, float(cfg["model"]["epsilon"]))
    b = cfg["basis"]
    D = int(b["D"]) if D is None else D
    return [ortho.make_basis(b["kind"], L[i], U[i], D, int(b["n_gr"])) for i in range(model.d)]


def parse_points(spec: str, cfg, bases, model=None) -> np.ndarray:
    """``diagonal:N``, ``griddiag``, ``sample:N`` or a CSV file of points."""
    L = np.array([b.L for b in bases])
    U = np.array([b.U for b in bases])
    if spec.startswith("diagonal:"):
        n = int(spec.split(":", 1)[1])
        if n < 1:
            raise ConfigError("diagonal needs at least one point")
        t = np.linspace(0.0, 1.0, n) if n > 1 else np.zeros(1)
        return L + t[:, None] * (U - L)
    if spec == "griddiag":
        return np.stack([b.grid for b in bases], axis=1)
    if spec.startswith("sample:"):
        model = model or make_model(cfg)
        n = int(spec.split(":", 1)[1])
        return finance.sample_points(model, np.full(model.d, model.K), n,
                                     int(cfg["eval"]["sample_seed"]), bounds=(L, U))
    if not os.path.exists(spec):
        raise ConfigError(f"point spec {spec!r} is neither a known form nor a file")
    with open(spec, newline="") as fh:
        rows = [r for r in csv.reader(fh)][1:]
    try:
        pts = np.array([[float(v) for v in r] for r in rows if r], dtype=np.float64)
    except ValueError as exc:
        raise ConfigError(f"{spec}: {exc}") from exc
    if pts.size == 0:
        raise ConfigError(f"{spec} contains no points")
    if pts.ndim != 2 or pts.shape[1] != len(bases):
        raise ConfigError(f"{spec}: expected {len(bases)} columns per row")
    return pts


def write_points_csv(path, pts, extra: dict[str, np.ndarray] | None = None):
    extra = extra or {}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{i + 1}" for i in range(pts.shape[1])] + list(extra))
        for k, row in enumerate(pts):
            w.writerow([repr(float(v)) for v in row] + [repr(float(col[k])) for col in extra.values()])


# -- commands ------------------------------------------------------------

def cmd_gen_target(cfg) -> ortho.GridTensor:
    out = _need_path(cfg, "target")
    model = make_model(cfg)
    bases = make_bases(cfg, model, D=int(cfg["basis"]["n_gr"]))
    log.info("domain L=%s U=%s", [b.L for b in bases], [b.U for b in bases])
    p = cfg["pricer"]
    pc = finance.PricerConfig(int(p["n_paths"]), int(p["seed"]), bool(p["crn"]), cfg["threads"])
    t0 = time.perf_counter()
    tensor = finance.grid_target(
        model, bases, pc,
        progress=lambda k, n: log.debug("priced chunk %d/%d", k, n))
    ortho.write_gridtensor(out, tensor)
    log.info("wrote %s (%d points, C=%.6g, %.1fs)", out, tensor.values.size, tensor.C,
             time.perf_counter() - t0)
    return tensor


def cmd_expand(cfg) -> ortho.GridTensor:
    src = _need_path(cfg, "target", must_exist=True)
    out = _need_path(cfg, "coeffs")
    values = ortho.read_gridtensor(src)
    bases = make_bases(cfg)
    try:
        coeffs = ortho.coefficients_from_grid(values, bases)
    except ValueError as exc:
        raise ConfigError(f"{src}: {exc}") from exc
    ortho.write_gridtensor(out, coeffs)
    log.info("wrote %s (dims %s, |a|=%.6g)", out, coeffs.dims, coeffs.C)
    return coeffs


def cmd_canon(cfg) -> mps.MPS:
    src = _need_path(cfg, "coeffs", must_exist=True)
    out = _need_path(cfg, "canon")
    coeffs = ortho.read_gridtensor(src)
    m, eps = mps.canonicalize(coeffs, int(cfg["fit"]["r"]))
    # stored at unit norm, like a fitted state, so eval/compare scale both by C
    m = m.normalized()
    mps.write_mps(out, m)
    log.info("wrote %s (bonds %s, truncation errors %s)", out, m.bonds, eps)
    return m


def _fit_config(cfg, **kw) -> fit.FitConfig:
    f = cfg["fit"]
    opts = dict(mode=f["mode"], estimator=f["estimator"], shots=int(f["shots"]),
                n_iter=int(f["n_iter"]), seed=int(f["seed"]),
                early_stop_tol=f.get("early_stop_tol"), sweep=f["sweep"])
    opts.update(kw)
    return fit.FitConfig(**opts)


def cmd_fit(cfg) -> fit.FitReport:
    f = cfg["fit"]
    D, r = int(cfg["basis"]["D"]), int(f["r"])
    _pow2(D, "basis.D")
    _pow2(r, "fit.r")
    if r > D:
        raise ConfigError(f"fit.r={r} must not exceed basis.D={D}")
    if f["mode"] == "full":
        _pow2(int(cfg["basis"]["n_gr"]), "basis.n_gr")
    out_mps = _need_path(cfg, "mps")
    out_trace = _need_path(cfg, "trace")
    bases = make_bases(cfg)
    d = len(bases)
    if f["mode"] == "coef":
        target = ortho.read_gridtensor(_need_path(cfg, "coeffs", must_exist=True))
        if target.dims != (D,) * d:
            raise ConfigError(f"coefficient file has dims {target.dims}, expected {(D,) * d}")
    else:
        target = ortho.read_gridtensor(_need_path(cfg, "target", must_exist=True))
    if f["init"] == "svd":
        coeffs = target if f["mode"] == "coef" else ortho.coefficients_from_grid(target, bases)
        start = circuit.build_vmps(mps.canonicalize(coeffs, r)[0].normalized())
    else:
        start = circuit.vmps_skeleton(d, D, r, int(f["seed"]))
    report = fit.run_fit(target, start, _fit_config(cfg), bases=bases,
                         progress=lambda s, F: log.info("sweep %d fidelity %.12f", s, F))
    fit.write_trace_csv(report, out_trace)
    if report.mps is not None:
        mps.write_mps(out_mps, report.mps)
    print(f"final fidelity {report.final_fidelity:.12f}")
    print(f"dof {mps.dof_count(d, D, r)} (dense {D ** d})")
    if report.stats.get("interrupted"):
        raise KeyboardInterrupt
    return report


def _scale_C(cfg, bases):
    """Overall factor multiplying the unit-norm fitted function."""
    C = cfg["eval"].get("C")
    if C is not None:
        C = float(C)
        if C <= 0:
            raise ConfigError("eval.C must be positive")
        return C
    key = "coeffs" if cfg["fit"]["mode"] == "coef" else "target"
    t = ortho.read_gridtensor(_need_path(cfg, key, must_exist=True))
    if t.C is None:
        raise ConfigError(f"output.{key} carries no C; set eval.C")
    return t.C


def _fitted_values(cfg, bases, pts):
    fm = fit.function_mps(mps.read_mps(_need_path(cfg, "mps", must_exist=True)),
                          cfg["fit"]["mode"], bases)
    return _scale_C(cfg, bases) * mps.mps_eval_many(fm, bases, pts)


def _in_domain(bases, pts):
    L = np.array([b.L for b in bases])
    U = np.array([b.U for b in bases])
    return np.all((pts >= L) & (pts <= U), axis=1)


def cmd_eval(cfg) -> np.ndarray:
    out = _need_path(cfg, "eval")
    bases = make_bases(cfg)
    pts = parse_points(cfg["eval"]["points"], cfg, bases)
    ok = _in_domain(bases, pts)
    vals = np.full(len(pts), np.nan)
    if np.any(ok):
        vals[ok] = _fitted_values(cfg, bases, pts[ok])
    for k in np.flatnonzero(~ok):
        log.warning("row %d: point %s is outside the domain", k, pts[k].tolist())
    write_points_csv(out, pts, {"value": vals})
    return vals


def _grid_lookup(bases, target: ortho.GridTensor, pts):
    """MC grid values at rows that coincide with grid points (NaN elsewhere)."""
    out = np.full(len(pts), np.nan)
    idx = []
    for i, b in enumerate(bases):
        j = np.clip(np.searchsorted(b.grid, pts[:, i]), 0, b.n_gr - 1)
        jm = np.clip(j - 1, 0, b.n_gr - 1)
        pick = np.where(np.abs(b.grid[jm] - pts[:, i]) < np.abs(b.grid[j] - pts[:, i]), jm, j)
        hit = np.abs(b.grid[pick] - pts[:, i]) <= 1e-9 * max(1.0, abs(b.U))
        idx.append(np.where(hit, pick, -1))
    idx = np.stack(idx, axis=1)
    on = np.all(idx >= 0, axis=1)
    if np.any(on):
        out[on] = target.values[tuple(idx[on].T)]
    return out


def cmd_compare(cfg) -> dict:
    out = _need_path(cfg, "compare")
    model = make_model(cfg)
    bases = make_bases(cfg, model)
    pts = parse_points(cfg["eval"]["points"], cfg, bases, model)
    if len(pts) == 0:
        raise ConfigError("empty point set")
    if not np.all(_in_domain(bases, pts)):
        raise ConfigError("some comparison points lie outside the domain")
    coeffs = ortho.read_gridtensor(_need_path(cfg, "coeffs", must_exist=True))
    cos = ortho.expansion_eval_many(coeffs, bases, pts)
    tn = _fitted_values(cfg, bases, pts)
    if cfg["compare"]["mc_at_points"]:
        p = cfg["pricer"]
        z = np.random.default_rng(int(p["seed"])).standard_normal((int(p["n_paths"]), model.d))
        pc = finance.PricerConfig(int(p["n_paths"]), int(p["seed"]))
        mc = np.array([finance.mc_estimate(model, x, pc, z)[0] for x in pts])
    else:
        mc = _grid_lookup(bases, ortho.read_gridtensor(_need_path(cfg, "target", must_exist=True)), pts)
    has_mc = ~np.isnan(mc)

    def mx(v):
        return float(np.max(np.abs(v))) if v.size else float("nan")

    summary = {"max|TN-MC|": mx((tn - mc)[has_mc]), "max|COS-MC|": mx((cos - mc)[has_mc]),
               "max|TN-COS|": mx(tn - cos)}
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["metric", "value", "n_points"])
        for k, v in summary.items():
            w.writerow([k, repr(v), int(has_mc.sum()) if "MC" in k else len(pts)])
    for k, v in summary.items():
        print(f"{k} = {v:.6g}")
    return summary


def power_law_fit(dof, delta) -> tuple[float, float]:
    """Least squares log(delta) = log(a) + b log(dof); returns (a, b)."""
    dof, delta = np.asarray(dof, float), np.asarray(delta, float)
    if len(dof) < 2:
        raise ConfigError("power-law fit needs at least two points")
    b, loga = np.polyfit(np.log(dof), np.log(delta), 1)
    return float(np.exp(loga)), float(b)


def scan_dof(coeffs: ortho.GridTensor, bases, m_bl_list, pts, seeds=3, n_iter=5,
             base_seed=0, on_row=None) -> list[dict]:
    """Fit sliding-block circuits for each m_bl; max error against the full expansion."""
    d = coeffs.d
    D = coeffs.dims[0]
    _pow2(D, "basis.D")
    m_deg = D.bit_length() - 1
    ref = ortho.expansion_eval_many(coeffs, bases, pts)
    rows = []
    for m_bl in m_bl_list:
        best = None
        for s in range(seeds):
            layout = circuit.build_sliding_circuit(d, m_deg, int(m_bl), base_seed + 1000 * int(m_bl) + s)
            rep = fit.run_fit(coeffs, layout, fit.FitConfig(n_iter=n_iter))
            amps = circuit.circuit_state(rep.circuit).amplitudes.reshape(coeffs.dims)
            approx = ortho.expansion_eval_many(ortho.GridTensor(coeffs.C * amps), bases, pts)
            delta = float(np.max(np.abs(approx - ref)))
            if best is None or delta < best["delta_max"]:
                best = {"m_bl": int(m_bl), "dof": circuit.sliding_dof(d, m_deg, int(m_bl)),
                        "delta_max": delta, "fidelity": rep.final_fidelity, "seed": s}
        rows.append(best)
        if on_row is not None:
            on_row(best)
    return rows


def cmd_scan_dof(cfg) -> tuple[list[dict], tuple[float, float]]:
    out = _need_path(cfg, "scan")
    sc = cfg["scan"]
    coeffs = ortho.read_gridtensor(_need_path(cfg, "coeffs", must_exist=True))
    bases = make_bases(cfg)
    d = len(bases)
    m_deg = int(cfg["basis"]["D"]).bit_length() - 1
    for m in sc["m_bl"]:
        if not 2 <= int(m) <= d * m_deg - 1:
            raise ConfigError(f"scan.m_bl value {m} outside [2, {d * m_deg - 1}]")
    pts = parse_points(cfg["eval"]["points"], cfg, bases)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["m_bl", "dof", "delta_max", "fidelity"])

        def on_row(row):
            w.writerow([row["m_bl"], row["dof"], repr(row["delta_max"]), repr(row["fidelity"])])
            fh.flush()
            log.info("m_bl=%d dof=%d delta_max=%.6g", row["m_bl"], row["dof"], row["delta_max"])

        rows = scan_dof(coeffs, bases, sc["m_bl"], pts, int(sc["seeds"]), int(sc["n_iter"]),
                        int(cfg["fit"]["seed"]), on_row)
    lo, hi = sc["window"]
    sel = [r for r in rows if lo <= r["m_bl"] <= hi]
    a, b = power_law_fit([r["dof"] for r in sel], [r["delta_max"] for r in sel])
    print(f"power-law fit over m_bl in [{lo}, {hi}]: a = exp({np.log(a):.4f}), b = {b:.4f}")
    return rows, (a, b)


COMMANDS = {
    "gen-target": cmd_gen_target,
    "expand": cmd_expand,
    "canon": cmd_canon,
    "fit": cmd_fit,
    "eval": cmd_eval,
    "compare": cmd_compare,
    "scan-dof": cmd_scan_dof,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH")
    common.add_argument("--seed", type=int)
    common.add_argument("--threads", type=int)
    common.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="override a config entry, e.g. fit.r=8")
    common.add_argument("-v", "--verbose", action="store_true")
    p = argparse.ArgumentParser(prog="ampread", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config, args.overrides, args.seed, args.threads)
        COMMANDS[args.command](cfg)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return 2
    except OSError as exc:
        log.error("file error: %s", exc)
        return 2
    except (NumericalError, MemoryError) as exc:
        log.error("numerical failure: %s", exc)
        return 3
    except KeyboardInterrupt:
        log.error("interrupted")
        return 130
    return 0


if __name__ == "__main__":
    sys.exit(main())
