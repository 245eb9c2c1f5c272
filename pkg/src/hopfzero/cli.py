"""Command-line front end: predict, locate, verify-torus, reproduce-example, sweep.

Each command returns a report dict validated against schema/report.schema.json
and written as report.json (plus delimited data files) when --out is given.
Wall-clock timings go to a separate timings.json so reports stay
bit-identical across runs.

Exit codes: 0 all comparisons within tolerance, 2 erratum flags or
out-of-tolerance comparisons, 1 pipeline failure.
"""
from __future__ import annotations

import argparse
import ast
import json
import logging
import math
import operator
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, is_dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Dict, List, Optional

import jsonschema
import numpy as np
import yaml

from . import __version__
from . import averaging as av
from . import bifurcation as bf
from . import torus_verify as tv
from .dynsys import CoefficientError, FamilyACoeffs, FamilyBCoeffs
from .poincare import MapError, SectionMap, fixed_point, map_derivatives, orbit_from_section

log = logging.getLogger("hopfzero")

SCHEMA_VERSION = "1"
A_FIELDS = ("alpha1", "alpha2", "beta1", "beta2", "gamma1", "gamma2")
DEFAULT_TOL = {
    "closed_form_rel": 1e-12,
    "identity_rel": 1e-8,
    "ns_abs": 1e-5,
    "defect_rel": 1e-3,
    "approach": 1e-4,
    "lyapunov_rel": 0.1,
}


class ConfigError(ValueError):
    """Invalid configuration; message names the offending field."""


class StageError(RuntimeError):
    def __init__(self, stage, err):
        super().__init__(f"[{stage}] {type(err).__name__}: {err}")
        self.stage = stage


# ---------------------------------------------------------------- config

_OPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
        ast.Div: operator.truediv, ast.Pow: operator.pow, ast.USub: operator.neg,
        ast.UAdd: operator.pos}
_FUNCS = {"sqrt": math.sqrt}
_NAMES = {"pi": math.pi}


def evaluate_expr(v) -> float:
    """Number or arithmetic string such as '128*sqrt(2)' or '-10725*pi/8'."""
    if isinstance(v, bool):
        raise ConfigError(f"boolean where a number was expected: {v!r}")
    if isinstance(v, (int, float)):
        return float(v)

    def ev(n):
        if isinstance(n, ast.Expression):
            return ev(n.body)
        if isinstance(n, ast.Constant) and isinstance(n.value, (int, float)):
            return float(n.value)
        if isinstance(n, ast.BinOp) and type(n.op) in _OPS:
            return _OPS[type(n.op)](ev(n.left), ev(n.right))
        if isinstance(n, ast.UnaryOp) and type(n.op) in _OPS:
            return _OPS[type(n.op)](ev(n.operand))
        if isinstance(n, ast.Name) and n.id in _NAMES:
            return _NAMES[n.id]
        if (isinstance(n, ast.Call) and isinstance(n.func, ast.Name) and n.func.id in _FUNCS
                and len(n.args) == 1 and not n.keywords):
            return _FUNCS[n.func.id](ev(n.args[0]))
        raise ConfigError(f"unsupported expression element {ast.dump(n)}")

    try:
        return ev(ast.parse(str(v), mode="eval"))
    except SyntaxError as e:
        raise ConfigError(f"cannot parse number {v!r}: {e}") from None


@dataclass
class RunConfig:
    family: str
    coeffs: Any
    raw: dict
    ns_parameter: Optional[str] = None
    printed: Dict[str, float] = field(default_factory=dict)
    tolerances: Dict[str, float] = field(default_factory=dict)
    locate: dict = field(default_factory=dict)
    torus: dict = field(default_factory=dict)
    trajectory: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)
    guess: Optional[List[float]] = None
    example: Optional[int] = None


def build_coeffs(family, block):
    if not isinstance(block, dict):
        raise ConfigError("coeffs: expected a mapping")
    try:
        base = {k: evaluate_expr(block[k]) for k in ("d", "w", "eps")}
    except KeyError as e:
        raise ConfigError(f"coeffs.{e.args[0]}: required field missing") from None
    if family == "A":
        extra = set(block) - {"d", "w", "eps", *A_FIELDS}
        if extra:
            raise ConfigError(f"coeffs: unknown Family A field(s) {sorted(extra)}")
        kw = {k: evaluate_expr(block[k]) for k in A_FIELDS if k in block}
        try:
            return FamilyACoeffs(**base, **kw)
        except CoefficientError as e:
            raise ConfigError(f"coeffs: {e}") from None
    if family == "B":
        extra = set(block) - {"d", "w", "eps", "alpha", "beta", "gamma"}
        if extra:
            raise ConfigError(f"coeffs: unknown Family B field(s) {sorted(extra)}")
        kw = {}
        for k in ("alpha", "beta", "gamma"):
            v = block.get(k, [])
            if not isinstance(v, (list, tuple)):
                raise ConfigError(f"coeffs.{k}: expected a list")
            kw[k] = tuple(evaluate_expr(x) for x in v)
        try:
            return FamilyBCoeffs(**base, **kw)
        except CoefficientError as e:
            raise ConfigError(f"coeffs: {e}") from None
    raise ConfigError(f"family: expected 'A' or 'B', got {family!r}")


def load_config(src, tol_scale: float = 1.0) -> RunConfig:
    """Parse a YAML path, YAML text or dict into a validated RunConfig."""
    if isinstance(src, dict):
        raw = src
    else:
        p = Path(src)
        text = p.read_text() if p.exists() else str(src)
        try:
            raw = yaml.safe_load(text)
        except yaml.YAMLError as e:
            raise ConfigError(f"config is not valid YAML: {e}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config: expected a mapping at top level")
    fam = str(raw.get("family", "")).upper()
    if "coeffs" not in raw:
        raise ConfigError("coeffs: required block missing")
    c = build_coeffs(fam, raw["coeffs"])
    tol = dict(DEFAULT_TOL)
    tol.update({k: float(v) for k, v in (raw.get("tolerances") or {}).items()})
    tol = {k: v * tol_scale for k, v in tol.items()}
    printed = {k: evaluate_expr(v) for k, v in (raw.get("printed") or {}).items()}
    ns_par = raw.get("ns_parameter")
    if ns_par is not None:
        try:
            bf.get_param(c, ns_par)
        except (AttributeError, IndexError, TypeError, ValueError):
            raise ConfigError(f"ns_parameter: unknown coefficient {ns_par!r}") from None
    guess = raw.get("guess")
    if guess is not None:
        guess = [evaluate_expr(x) for x in guess]
        if len(guess) != 2:
            raise ConfigError("guess: expected [r, z]")
    return RunConfig(fam, c, raw, ns_par, printed, tol, dict(raw.get("locate") or {}),
                     dict(raw.get("torus") or {}), dict(raw.get("trajectory") or {}),
                     dict(raw.get("sweep") or {}), guess, raw.get("example"))


def preset(n: int) -> str:
    if n not in (1, 2, 3):
        raise ConfigError(f"example: expected 1, 2 or 3, got {n}")
    return resources.files("hopfzero").joinpath(f"presets/ex{n}.yaml").read_text()


# ---------------------------------------------------------------- reports

def _clean(v):
    if is_dataclass(v) and not isinstance(v, type):
        return _clean({k: x for k, x in asdict(v).items() if not callable(x)})
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items() if not callable(x)}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, np.ndarray):
        return _clean(v.tolist())
    if isinstance(v, (complex, np.complexfloating)):
        return {"re": _clean(float(v.real)), "im": _clean(float(v.imag))}
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else None
    return v


class Report:
    def __init__(self, command, cfg: Optional[RunConfig]):
        self.d = {
            "tool": {"name": "hopfzero", "version": __version__, "schema_version": SCHEMA_VERSION},
            "command": command, "input": _clean(cfg.raw) if cfg else {},
            "predictions": {}, "comparisons": [], "findings": {}, "verdicts": [],
            "flags": [], "data_files": [], "status": "ok", "stage": None, "error": None,
        }
        self.timings = {}

    def compare(self, name, predicted, measured, tol, relative=True, source=""):
        p, m = float(predicted), float(measured)
        diff = m - p
        scale = abs(p) if relative else 1.0
        ok = bool(math.isfinite(diff) and abs(diff) <= tol * scale)
        self.d["comparisons"].append(_clean(dict(name=name, predicted=p, measured=m, difference=diff,
                                                 tolerance=tol, relative=relative, within=ok,
                                                 source=source)))
        return ok

    def verdicts(self, vs):
        self.d["verdicts"] += [_clean(dict(name=v.name, value=v.value, rule=v.rule)) for v in vs]

    def flag(self, *msgs):
        for m in msgs:
            if m not in self.d["flags"]:
                self.d["flags"].append(m)

    def merge(self, other: "Report", prefix: str):
        o = other.d
        self.d["predictions"].update(o["predictions"])
        for c in o["comparisons"]:
            self.d["comparisons"].append(dict(c, name=f"{prefix}.{c['name']}"))
        self.d["findings"][prefix] = o["findings"]
        self.d["verdicts"] += [v for v in o["verdicts"] if v not in self.d["verdicts"]]
        self.flag(*o["flags"])
        self.d["data_files"] += o["data_files"]
        self.timings.update({f"{prefix}.{k}": v for k, v in other.timings.items()})
        if o["status"] == "failure":
            self.d.update(status="failure", stage=o["stage"], error=o["error"])

    def finish(self):
        if self.d["status"] != "failure":
            bad = self.d["flags"] or not all(c["within"] for c in self.d["comparisons"])
            self.d["status"] = "errata" if bad else "ok"
        self.d = _clean(self.d)
        validate_report(self.d)
        return self.d


def validate_report(d):
    schema = json.loads(resources.files("hopfzero").joinpath("schema/report.schema.json").read_text())
    jsonschema.validate(d, schema)


def write_table(path: Path, header: str, cols, rep: Report):
    """Whitespace-delimited columns with a commented header line."""
    np.savetxt(path, np.column_stack(cols), header=header, fmt="%.17g")
    rep.d["data_files"].append(path.name)


class _Stage:
    def __init__(self, rep: Report, name):
        self.rep, self.name = rep, name

    def __enter__(self):
        self.t = time.perf_counter()
        return self

    def __exit__(self, et, e, tb):
        self.rep.timings[self.name] = time.perf_counter() - self.t
        if e is not None and not isinstance(e, StageError):
            raise StageError(self.name, e) from e
        return False


# ---------------------------------------------------------------- predict

def _is_b1(c):
    return c.family == "B" and abs(c.d * c.w ** 2 - 1) < 1e-12


def _prediction_block(c):
    if c.family == "A":
        pr = av.predictions_family_a(c)
    else:
        pr = av.predictions_family_b(c)
    return pr, {k: v for k, v in asdict(pr).items() if k not in ("verdicts", "flags")}


def cmd_predict(cfg: RunConfig) -> Report:
    """Closed-form pipeline only."""
    rep = Report("predict", cfg)
    c, tol = cfg.coeffs, cfg.tolerances
    with _Stage(rep, "closed-form"):
        pr, block = _prediction_block(c)
        rep.d["predictions"].update(block)
        rep.verdicts(pr.verdicts)
        rep.flag(*pr.flags)
        rep.d["predictions"]["flow_divergence"] = bf.flow_divergence(c)
        if c.family == "A":
            for lab, r in (("plus", pr.rstar_plus), ("minus", pr.rstar_minus)):
                if np.isfinite(r):
                    g = av.g1_family_a((r, pr.zstar), c)
                    rep.compare(f"g1(r*_{lab}, z*) = 0", 0.0, float(np.abs(g).max()),
                                tol["closed_form_rel"] * max(1.0, abs(r)), relative=False,
                                source="fixed point of the first averaged function")
            if np.isfinite(pr.rstar):
                J = av.closed_form_jacobian(av.g1_family_a, (pr.rstar, pr.zstar), c)
                rep.compare("det Dg1 = -pi^2 l0/(d w^6)", pr.detDg1, np.linalg.det(J),
                            tol["identity_rel"], source="complex-step Jacobian")
        elif _is_b1(c) and np.isfinite(pr.rstar):
            g = av.g2_family_b1((pr.rstar, pr.zstar), c)
            rep.compare("g2(r*, z*) = 0", 0.0, float(np.abs(g).max()),
                        tol["closed_form_rel"] * max(1.0, pr.rstar), relative=False,
                        source="B1 fixed point of the second averaged function")
            J = av.closed_form_jacobian(av.g2_family_b1, (pr.rstar, pr.zstar), c)
            rep.compare("det Dg2 = 2 pi^2 k0/w^6", pr.detDg2, np.linalg.det(J),
                        tol["identity_rel"], source="complex-step Jacobian")
        if c.family == "B" and not _is_b1(c):
            try:
                es = bf.b2_eigen_expansion(c)
                rep.d["predictions"]["b2_multiplier_series"] = [
                    [[k, v] for k, v in t] for t in es.terms]
                rep.verdicts([av.Verdict("B2_floquet_verdict", es.verdict.classification,
                                         "signs of lambda1, lambda2 in 1 + eps lambda1, 1 + eps^3 lambda2")])
            except (ValueError, bf.PreconditionError) as e:
                rep.flag(f"B2 eigen expansion unavailable: {e}")
            try:
                ls = av.lyapunov_schmidt_b2(c)
                rep.d["predictions"]["ls_rstar"] = ls.rstar
                rep.d["predictions"]["ls_f1_vanishes"] = ls.f1_vanishes
            except (ValueError, av.ReductionError) as e:
                rep.flag(f"Lyapunov-Schmidt reduction unavailable: {e}")
        if c.family == "A" or _is_b1(c):
            ns = bf.ns_conditions(c, cfg.ns_parameter)
            rep.d["predictions"]["ns"] = {
                k: v for k, v in asdict(ns).items() if k not in ("flags",)}
            rep.flag(*ns.flags)
            j, lval = bf.lyapunov_closed_form(c)
            rep.d["predictions"][f"l1_{j}"] = lval
            mu = bf.get_param(c, ns.parameter)
            tvd = bf.torus_verdict(ns, mu)
            rep.verdicts([av.Verdict("torus_side", tvd.side, "l_{1,j*} (mu - mu(eps)) d0 < 0"),
                          av.Verdict("torus_stability_at_mu", tvd.torus_stability,
                                     "repelling iff l_{1,j*} > 0")])
        for name, val in cfg.printed.items():
            key = {"l13": "l13", "l12": "l12", "lambda1": "lambda1", "lambda2": "lambda2"}.get(name, name)
            got = rep.d["predictions"].get(key)
            if got is None:
                rep.flag(f"printed value {name!r} has no matching prediction")
                continue
            rep.compare(f"{name} (closed form vs printed)", val, got, tol["closed_form_rel"],
                        source="printed constant")
    return rep


# ---------------------------------------------------------------- locate

def _seed(cfg: RunConfig):
    c = cfg.coeffs
    if cfg.guess is not None:
        return np.array(cfg.guess)
    pr, _ = _prediction_block(c)
    if c.family == "A" or _is_b1(c):
        return np.array([pr.rstar, pr.zstar])
    ls = av.lyapunov_schmidt_b2(c)
    if ls.rstar is None:
        raise av.ReductionError("no B2 branch seed (f1 does not vanish or eta <= 0)")
    return np.array([ls.rstar, c.eps * ls.zeta1(ls.rstar)])


def _series_multipliers(c):
    """Predicted multipliers exp(eps^l mu) and tolerances 10 eps^(l+1) |mu|.

    mu are the eigenvalues of the lowest nonvanishing averaged Jacobian
    (Family A, B1) or lambda1, lambda2 of the B2 expansion.
    """
    e = c.eps
    if c.family == "A":
        pr = av.predictions_family_a(c)
        mu = np.linalg.eigvals(av.closed_form_jacobian(av.g1_family_a, (pr.rstar, pr.zstar), c))
        el = np.array([e, e])
    elif _is_b1(c):
        pr = av.predictions_family_b(c)
        mu = np.linalg.eigvals(av.closed_form_jacobian(av.g2_family_b1, (pr.rstar, pr.zstar), c))
        el = np.array([e ** 2, e ** 2])
    else:
        es = bf.b2_eigen_expansion(c)
        mu = np.array([es.terms[0][1][1], es.terms[1][1][1]])
        el = np.array([e, e ** 3])
    return np.exp(el * mu), 10 * el * e * np.abs(mu)


def _sort_mult(z):
    z = np.asarray(z)
    return z[np.lexsort((z.imag, z.real))]


def cmd_locate(cfg: RunConfig, out: Optional[Path] = None) -> Report:
    rep = Report("locate", cfg)
    c, tol = cfg.coeffs, cfg.tolerances
    if c.eps == 0:
        raise StageError("config", ConfigError("coeffs.eps: eps = 0 has no periodic orbit to locate"))
    n = int(cfg.locate.get("n", 1))
    m = SectionMap(c, n=n)
    with _Stage(rep, "seed"):
        seed = _seed(cfg)
    with _Stage(rep, "fixed-point"):
        fp = fixed_point(m, seed)
    ev = _sort_mult(fp.eigenvalues)
    rep.d["findings"].update(
        seed=seed, fixed_point=fp.rz, residual=fp.residual, iterations=fp.iterations,
        multipliers=ev, moduli=np.abs(ev), jacobian_error=fp.jacobian_error,
        return_time=fp.return_time, returns=n)
    fv = bf.classify_floquet(fp.eigenvalues)
    rep.verdicts([av.Verdict("floquet_stability", fv.classification, "all |multiplier| < 1")])
    div = bf.flow_divergence(c)
    rep.compare("det DPi = exp((c - b d) T)", math.exp(div * fp.return_time),
                float(np.linalg.det(fp.jacobian)), tol["identity_rel"],
                source="constant divergence of the FHN field")
    with _Stage(rep, "series"):
        try:
            pred, ptol = _series_multipliers(c)
            pred = _sort_mult(pred ** n)
            rep.d["findings"]["series_multipliers"] = pred
            for i, (p, q, t) in enumerate(zip(pred, ev, ptol)):
                rep.compare(f"multiplier[{i}] vs series", abs(p), abs(q), float(t) * n, relative=False,
                            source="averaging / Murdock expansion")
        except (ValueError, bf.PreconditionError, av.ReductionError) as e:
            rep.flag(f"no multiplier series available: {e}")
    if out is not None:
        with _Stage(rep, "export"):
            orb = orbit_from_section(m, fp.rz)
            write_table(out / "orbit.dat", "t x1 x2 x3 (scaled standard) x y z (physical)",
                        [orb.t, orb.standard, orb.physical], rep)
            rep.d["findings"]["orbit_closure_error"] = orb.closure_error
    return rep


# ---------------------------------------------------------------- verify-torus

def _torus_start(cfg, m, fp_rz):
    t = cfg.torus
    if "start_physical" in t:
        r, z, _ = tv.section_entry(m, [evaluate_expr(x) for x in t["start_physical"]])
        return np.array([r, z])
    if "start_section" in t:
        return np.array([evaluate_expr(x) for x in t["start_section"]])
    off = [evaluate_expr(x) for x in t.get("start_offset", [0.1, 0.0])]
    return np.asarray(fp_rz) + off


def _check_dict(chk: tv.TorusCheck):
    d = {k: v for k, v in vars(chk).items() if k not in ("orbit", "circle", "frame")}
    d["circle_coeffs"] = chk.circle.coeffs if chk.circle is not None else None
    d["circle_residual"] = chk.circle.residual if chk.circle is not None else None
    d["orbit_points"] = len(chk.orbit.points)
    return _clean(d)


def cmd_verify_torus(cfg: RunConfig, out: Optional[Path] = None) -> Report:
    rep = Report("verify-torus", cfg)
    c, tol = cfg.coeffs, cfg.tolerances
    if not (c.family == "A" or _is_b1(c)):
        raise StageError("config", ConfigError("family: torus verification needs Family A or B1"))
    ns = bf.ns_conditions(c, cfg.ns_parameter)
    par = ns.parameter
    mu = bf.get_param(c, par)
    rep.flag(*ns.flags)
    j, lval = bf.lyapunov_closed_form(c)
    rep.d["predictions"].update({f"l1_{j}": lval, "mu_volume": ns.mu_volume, "d0": ns.d0, "w0": ns.w0})
    m = SectionMap(c)
    with _Stage(rep, "seed"):
        seed = _seed(cfg)
    # NS point at this eps
    with _Stage(rep, "ns-locate"):
        step = 1e-3 * max(abs(ns.mu_volume), 1e-3)
        pt = bf.locate_ns_curve(m, par, ns.mu_volume, seed, mu_step=step, tol=1e-11)
    rep.d["findings"]["ns_point"] = _clean(dict(mu=pt.mu, fixed_point=pt.fixed.rz, theta=pt.theta,
                                                modulus_defect=pt.modulus_defect,
                                                jacobian_error=pt.fixed.jacobian_error))
    rep.compare("NS parameter: secant on |lambda| - 1 vs c = b d", ns.mu_volume, pt.mu,
                tol["ns_abs"], relative=False, source="divergence identity")
    with _Stage(rep, "lyapunov"):
        mm = m.with_coeffs(bf.with_param(c, par, pt.mu))
        md = map_derivatives(mm, pt.fixed.rz)
        L = bf.lyapunov_coeff(md)
    e = c.eps
    rep.d["findings"]["lyapunov"] = _clean(dict(
        printed_formula=L.value, normalized=L.value_normalized, scaled_printed=L.value / e ** j,
        scaled_normalized=L.value_normalized / e ** j, order=j, theta=L.theta,
        frame_condition=L.frame_condition))
    src = "printed constant" if f"l1{j}" in cfg.printed else "closed form"
    target = cfg.printed.get(f"l1{j}", lval)
    rep.compare(f"l1/eps^{j} (normalized, numerical) vs {src}", target, L.value_normalized / e ** j,
                tol["lyapunov_rel"], source="finite-difference B, C tensors")
    rep.compare(f"l1/eps^{j} (printed-p formula, numerical) vs {src}", target, L.value / e ** j,
                tol["lyapunov_rel"], source="finite-difference B, C tensors")
    # circle search at the configured parameter
    with _Stage(rep, "circle"):
        fp = fixed_point(m, seed)
        start = _torus_start(cfg, m, fp.rz)
        chk = tv.verify_torus(m, start, fp.rz, n_iter=int(cfg.torus.get("n_iter", 600)),
                              order=int(cfg.torus.get("order", 8)), defect_rel=tol["defect_rel"])
    chk.mu = mu
    rep.d["findings"]["circle"] = _check_dict(chk)
    predicted = bf.torus_verdict(ns, mu, mu_curve=pt.mu)
    rep.verdicts([
        av.Verdict("predicted_torus_side", predicted.side, "l_{1,j*} (mu - mu(eps)) d0 < 0"),
        av.Verdict("predicted_torus_stability", predicted.torus_stability, "repelling iff l_{1,j*} > 0"),
        av.Verdict("measured_circle", "invariant" if chk.invariant else "none",
                   "defect < defect_rel * radius and shrinking under 10x tighter tolerances"),
        av.Verdict("measured_circle_classification", chk.classification,
                   "probes at rho (1 +- 0.1) over 50 iterates"),
        av.Verdict("measured_fixed_point", chk.fixed_stability, "Floquet moduli"),
    ])
    if predicted.side == "torus side" and not chk.invariant:
        rep.flag("predicted torus not found: " + "; ".join(chk.notes))
    # circle family on the volume-preserving curve
    R = cfg.torus.get("ns_radius")
    if R is not None:
        with _Stage(rep, "ns-circle"):
            m0 = m.with_coeffs(bf.with_param(c, par, ns.mu_volume))
            fp0 = fixed_point(m0, pt.fixed.rz)
            P, _ = bf.real_jordan_frame(fp0.jacobian)
            order = int(cfg.torus.get("ns_order", 12))
            cp = tv.continue_invariant_circle(
                m0, tv.InvariantCircle(fp0.rz, P, np.r_[evaluate_expr(R), np.zeros(2 * order)]),
                par, ns.mu_volume)
            try:
                cls = tv.classify_circle(m.with_coeffs(bf.with_param(c, par, cp.mu)), cp.circle).stability
            except tv.ClassificationError:
                cls = "mixed"
        rep.d["findings"]["ns_circle"] = _clean(dict(
            radius=cp.circle.coeffs[0], mu=cp.mu, mu_minus_volume=cp.mu - ns.mu_volume,
            defect=cp.circle.defect, mean_radius=cp.circle.mean_radius, converged=cp.converged,
            classification=cls))
    if out is not None:
        with _Stage(rep, "export"):
            pts = chk.orbit.points
            write_table(out / "section_points.dat", "k r z (section theta = 0, scaled standard)",
                        [np.arange(len(pts)), pts], rep)
            if chk.circle is not None:
                phi = np.linspace(0, 2 * np.pi, 256, endpoint=False)
                write_table(out / "circle.dat", "phi r z (fitted curve)", [phi, chk.circle.points(phi)], rep)
                rows = []
                for k, p in enumerate(chk.circle.points(np.linspace(0, 2 * np.pi, 16, endpoint=False))):
                    o = orbit_from_section(m, p, samples=120)
                    rows.append(np.column_stack([np.full(len(o.t), k), o.t, o.physical]))
                write_table(out / "torus_surface.dat", "orbit t x y z (physical flow from curve points)",
                            [np.vstack(rows)], rep)
    return rep


# ---------------------------------------------------------------- examples

def _trajectory_check(cfg: RunConfig, rep: Report, out: Optional[Path]):
    c, t = cfg.coeffs, cfg.trajectory
    m = SectionMap(c)
    fp = fixed_point(m, _seed(cfg))
    x0 = [evaluate_expr(x) for x in t.get("start_standard", [1, 1, 1])]
    r, z, t_in = tv.section_entry(m, x0, standard=True)
    orb = tv.iterate_section(m, (r, z), int(t.get("n_returns", 800)))
    dist = np.linalg.norm(orb.points - fp.rz, axis=1)
    k0 = int(np.argmax(dist < 0.5 * dist[0])) if np.any(dist < 0.5 * dist[0]) else len(dist)
    mono = bool(np.all(np.diff(dist[k0:]) < 0)) if k0 < len(dist) - 1 else False
    rep.d["findings"]["trajectory"] = _clean(dict(
        start_standard=x0, section_entry=[r, z], entry_time=t_in, returns=orb.n,
        diverged=orb.diverged, transient=k0, monotone_after_transient=mono,
        final_distance=dist[-1], fixed_point=fp.rz))
    rep.compare("trajectory from (1,1,1): final section distance", 0.0, float(dist[-1]),
                cfg.tolerances["approach"], relative=False, source="located periodic orbit")
    if not mono:
        rep.flag("trajectory distance to the fixed point is not monotone after the transient")
    if out is not None:
        write_table(out / "section_convergence.dat", "k r z distance", [np.arange(len(dist)), orb.points, dist], rep)
        from scipy.integrate import solve_ivp
        from .dynsys import scaled_field, standard_to_phys
        sol = solve_ivp(lambda s, x: scaled_field(x, c), (0, t_in + 40 * 2 * np.pi / c.w), x0,
                        method="DOP853", rtol=1e-10, atol=1e-12, dense_output=True)
        ts = np.linspace(sol.t[0], sol.t[-1], 4000)
        X = sol.sol(ts).T
        write_table(out / "trajectory.dat", "t x1 x2 x3 (scaled standard) x y z (physical)",
                    [ts, X, standard_to_phys(X, c)], rep)


def cmd_reproduce_example(n: int, out: Optional[Path] = None, tol_scale: float = 1.0) -> Report:
    cfg = load_config(preset(n), tol_scale)
    rep = Report("reproduce-example", cfg)
    rep.merge(cmd_predict(cfg), "predict")
    rep.merge(cmd_locate(cfg, out), "locate")
    if n in (1, 2):
        rep.merge(cmd_verify_torus(cfg, out), "torus")
    else:
        with _Stage(rep, "trajectory"):
            _trajectory_check(cfg, rep, out)
    return rep


# ---------------------------------------------------------------- sweep

def _sweep_point(args):
    raw, par, val, do_locate = args
    cfg = load_config(raw)
    c = bf.with_param(cfg.coeffs, par, val)
    row = {"parameter": par, "value": val}
    try:
        pr, block = _prediction_block(c)
        row.update({v.name: v.value for v in pr.verdicts})
        row["trace_coeff"] = block["trace_coeff"]
        row["flow_divergence"] = bf.flow_divergence(c)
        if do_locate:
            cfg.coeffs = c
            fp = fixed_point(SectionMap(c), _seed(cfg))
            row["moduli"] = np.abs(_sort_mult(fp.eigenvalues))
            row["fixed_point"] = fp.rz
    except (ValueError, ArithmeticError, MapError, RuntimeError) as e:
        row["error"] = f"{type(e).__name__}: {e}"
    return _clean(row)


def _workers(n):
    cap = os.environ.get("HOPFZERO_MAX_WORKERS")
    return max(1, min(n, int(cap))) if cap else max(1, n)


def cmd_sweep(cfg: RunConfig, workers: int = 1) -> Report:
    rep = Report("sweep", cfg)
    s = cfg.sweep
    par = s.get("parameter") or cfg.ns_parameter
    if par is None:
        raise StageError("config", ConfigError("sweep.parameter: required"))
    if "values" in s:
        vals = [evaluate_expr(v) for v in s["values"]]
    else:
        vals = list(np.linspace(evaluate_expr(s.get("start", 0)), evaluate_expr(s.get("stop", 0)),
                                int(s.get("num", 0))))
    jobs = [(cfg.raw, par, float(v), bool(s.get("locate", False))) for v in vals]
    with _Stage(rep, "sweep"):
        w = _workers(workers)
        if w > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=w) as ex:
                rows = list(ex.map(_sweep_point, jobs))
        else:
            rows = [_sweep_point(j) for j in jobs]
    rep.d["table"] = rows
    rep.d["findings"]["points"] = len(rows)
    rep.d["findings"]["failures"] = sum("error" in r for r in rows)
    return rep


# ---------------------------------------------------------------- main

def _emit(rep: Report, out: Optional[Path]):
    d = rep.finish()
    text = json.dumps(d, indent=2, sort_keys=True)
    if out is not None:
        (out / "report.json").write_text(text + "\n")
        (out / "timings.json").write_text(json.dumps(rep.timings, indent=2, sort_keys=True) + "\n")
    else:
        print(text)
    return d


def run(argv=None):
    """Parse arguments and run; returns (exit code, report dict or None)."""
    ap = argparse.ArgumentParser(prog="hopfzero", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=["predict", "locate", "verify-torus", "reproduce-example", "sweep"])
    ap.add_argument("--config", help="YAML run configuration")
    ap.add_argument("--example", type=int, choices=[1, 2, 3], help="built-in example preset")
    ap.add_argument("--out", type=Path, help="output directory for report.json and data files")
    ap.add_argument("--tol-scale", type=float, default=1.0, help="multiply every tolerance")
    ap.add_argument("--workers", type=int, default=1, help="sweep worker processes")
    ap.add_argument("-v", "--verbose", action="store_true")
    a = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if a.out is not None:
        a.out.mkdir(parents=True, exist_ok=True)
    rep = Report(a.command, None)
    try:
        if a.command == "reproduce-example":
            if a.example is None:
                raise ConfigError("--example is required for reproduce-example")
            rep = cmd_reproduce_example(a.example, a.out, a.tol_scale)
        else:
            if (a.config is None) == (a.example is None):
                raise ConfigError("give exactly one of --config or --example")
            cfg = load_config(a.config if a.config else preset(a.example), a.tol_scale)
            rep = {"predict": lambda: cmd_predict(cfg),
                   "locate": lambda: cmd_locate(cfg, a.out),
                   "verify-torus": lambda: cmd_verify_torus(cfg, a.out),
                   "sweep": lambda: cmd_sweep(cfg, a.workers)}[a.command]()
    except (ConfigError, StageError) as e:
        log.error("%s", e)
        rep.d.update(status="failure", stage=getattr(e, "stage", "config"), error=str(e))
    d = _emit(rep, a.out)
    return {"ok": 0, "errata": 2, "failure": 1}[d["status"]], d


def main(argv=None):
    return run(argv)[0]


if __name__ == "__main__":
    sys.exit(main())
