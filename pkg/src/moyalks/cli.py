"""Command-line runner for bracket, evolution and entropy experiments.

    moyalks bracket --f "q^3" --g "p^3" --hbar 0.2
    moyalks entropy classical --system cat --depths 2..6 --n 14
    moyalks entropy quantum --system kicked-rotor-10 --hbar 0.1 --estimator symbol-point
    moyalks entropy sweep --system kicked-rotor-10 --hbar 0,0.05,0.1,0.2
    moyalks run --config scenario.yaml [overrides]

Exit status: 0 success, 2 configuration error, 3 inconclusive estimate,
4 numerical abort (stability, resolution or degenerate fit).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import re
import sys
from dataclasses import asdict, dataclass, field, fields
from fractions import Fraction
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from . import __version__
from .algebraic import algebraic_ks_of_system
from .entropy.partition import Box, Disk, PartitionFamily, SamplingPlan
from .entropy.quantum import ESTIMATORS, NEGATIVITY_LIMIT, ks_entropy_quantum, quantum_sweep
from .entropy.rates import CONV_TOL, MIN_OCCUPANCY, ks_entropy
from .entropy.systems import baker_map, cat_map, from_flow, harmonic_time_one, rotation, standard_map
from .errors import (ConfigurationError, DegenerateFitError, MoyalKSError, ResolutionError, StabilityError,
                     UnsupportedError)
from .flow import FlowSpec, liouville_step, moyal_step
from .geometry.observable import Observable, format_rational
from .geometry.space import PhaseSpace
from .starproduct import moyal_bracket, moyal_product

EXIT_OK, EXIT_CONFIG, EXIT_INCONCLUSIVE, EXIT_NUMERICAL = 0, 2, 3, 4
EXPERIMENTS = ("bracket", "evolve", "entropy-classical", "entropy-quantum", "sweep")
POINT_MAPS = ("cat", "baker", "rotation")
FLOW_SYSTEMS = ("harmonic",)
PARAM_SYSTEM = re.compile(r"^(standard|kicked-rotor)-([0-9]+(?:\.[0-9]*)?)$")
HARMONIC_RADIUS = 4.0

FILE_FORMATS = {
    "manifest.json": "configuration echo, code version, tolerances and this file list",
    "summary.json": "structured result of the experiment",
    "per_depth.csv": "one line per partition depth and refinement level: "
                     "system,hbar,estimator,depth,n,H_n,d_n,rate,converged,negativity_mass,method,samples",
    "sweep.csv": "one line per hbar and estimator: hbar,estimator,h_hbar,converged,negativity_mass,"
                 "classical_h,discrepancy",
    "evolve.csv": "one line per hbar: hbar,t,steps,l2_vs_classical,mean_drift,negativity_mass",
}


class ConfigError(ConfigurationError):
    def __init__(self, message: str, field_name: Optional[str] = None, line: Optional[int] = None):
        self.field_name, self.line = field_name, line
        where = ""
        if field_name:
            where = f"field '{field_name}'"
            if line:
                where += f" (line {line})"
            where += ": "
        super().__init__(where + message)


# ------------------------------------------------------------- scenario

@dataclass
class Scenario:
    experiment: str = "entropy-classical"
    system: Optional[str] = None
    hamiltonian: Optional[str] = None
    space: Optional[dict] = None
    domain_radius: Optional[float] = None
    f: Optional[str] = None
    g: Optional[str] = None
    t: float = 1.0
    product: bool = False
    hbar: list = field(default_factory=list)
    classical_anchor: bool = False
    depths: list = field(default_factory=lambda: [2, 3, 4])
    n_max: int = 10
    samples: int = 1_000_000
    seed: int = 0
    method: str = "auto"
    layer: str = "measure"
    estimator: str = "plugin"
    estimators: list = field(default_factory=lambda: list(ESTIMATORS))
    grid: Optional[int] = None
    workers: Optional[int] = None
    output: Optional[str] = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hbar"] = [format_rational(h) for h in self.hbar]
        # worker count and output location do not affect results, so they are not echoed
        d.pop("workers")
        d.pop("output")
        return d


def _parse_number(x, name) -> Fraction:
    try:
        if isinstance(x, float):
            return Fraction(repr(x))
        return Fraction(str(x).strip())
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"not a number: {x!r}", name) from None


def parse_depths(x, name="depths") -> list:
    if isinstance(x, int):
        return [x]
    if isinstance(x, str):
        m = re.fullmatch(r"\s*(\d+)\s*\.\.\s*(\d+)\s*", x)
        if m:
            a, b = int(m.group(1)), int(m.group(2))
            if b < a:
                raise ConfigError(f"empty range {x!r}", name)
            return list(range(a, b + 1))
        x = [t for t in x.split(",") if t.strip()]
    try:
        out = [int(str(v).strip()) for v in x]
    except (TypeError, ValueError):
        raise ConfigError(f"expected integers or a range a..b, got {x!r}", name) from None
    return out


def parse_hbars(x, name="hbar") -> list:
    if x is None:
        return []
    if isinstance(x, (int, float)) and not isinstance(x, bool):
        x = [x]
    elif isinstance(x, str):
        x = [t for t in x.split(",") if t.strip()]
    return [_parse_number(v, name) for v in x]


def _key_lines(text: str, suffix: str) -> dict:
    """Top-level key -> 1-based line number, for error messages."""
    lines = {}
    if suffix in (".yaml", ".yml"):
        try:
            node = yaml.compose(text)
        except yaml.YAMLError:
            return lines
        if isinstance(node, yaml.MappingNode):
            for k, _ in node.value:
                lines[str(k.value)] = k.start_mark.line + 1
    else:
        for i, line in enumerate(text.splitlines(), start=1):
            for m in re.finditer(r'"([A-Za-z_]+)"\s*:', line):
                lines.setdefault(m.group(1), i)
    return lines


def load_config(path) -> tuple[dict, dict]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    suffix = path.suffix.lower()
    try:
        if suffix == ".json":
            data = json.loads(text)
        else:
            data = yaml.safe_load(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", line=exc.lineno, field_name="<document>") from None
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"invalid YAML: {getattr(exc, 'problem', exc)}", "<document>",
                          mark.line + 1 if mark else None) from None
    if not isinstance(data, dict):
        raise ConfigError("the config must be a mapping of fields", "<document>", 1)
    return data, _key_lines(text, suffix)


ALIASES = {"n": "n_max", "out": "output", "hbars": "hbar"}


def build_scenario(data: dict, lines: Optional[dict] = None) -> Scenario:
    lines = lines or {}
    known = {f.name for f in fields(Scenario)}
    sc = Scenario()
    for raw_key, value in data.items():
        key = ALIASES.get(raw_key, raw_key)
        line = lines.get(raw_key)
        if key not in known:
            raise ConfigError("unknown field", raw_key, line)
        try:
            if key == "hbar":
                value = parse_hbars(value, raw_key)
            elif key == "depths":
                value = parse_depths(value, raw_key)
            elif key == "estimators":
                value = [value] if isinstance(value, str) else list(value)
            elif key in ("n_max", "samples", "seed", "grid", "workers"):
                if value is not None:
                    if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                        raise ConfigError(f"expected an integer, got {value!r}", raw_key, line)
                    value = int(float(value)) if isinstance(value, (int, float, str)) else int(value)
            elif key in ("t", "domain_radius"):
                value = None if value is None else float(_parse_number(value, raw_key))
            elif key in ("product", "classical_anchor"):
                if not isinstance(value, bool):
                    raise ConfigError(f"expected true or false, got {value!r}", raw_key, line)
            elif key == "space" and value is not None and not isinstance(value, dict):
                raise ConfigError("expected a mapping with kind, L and N", raw_key, line)
        except ConfigError as exc:
            if exc.line is None and line is not None:
                raise ConfigError(str(exc).split(": ", 1)[-1], raw_key, line) from None
            raise
        except (TypeError, ValueError):
            raise ConfigError(f"invalid value {value!r}", raw_key, line) from None
        setattr(sc, key, value)
    validate(sc, lines)
    return sc


def validate(sc: Scenario, lines: Optional[dict] = None) -> None:
    lines = lines or {}

    def fail(msg, name):
        raise ConfigError(msg, name, lines.get(name))

    if sc.experiment not in EXPERIMENTS:
        fail(f"unknown experiment {sc.experiment!r}; choose from {', '.join(EXPERIMENTS)}", "experiment")
    if sc.system is not None and not (sc.system in POINT_MAPS + FLOW_SYSTEMS or PARAM_SYSTEM.match(sc.system)):
        fail(f"unknown system {sc.system!r}; choose from cat, baker, rotation, harmonic, standard-K, "
             f"kicked-rotor-K", "system")
    if sc.system is not None and sc.hamiltonian is not None:
        fail("give either a system preset or a hamiltonian, not both", "hamiltonian")
    if sc.experiment == "bracket":
        if not sc.f or not sc.g:
            fail("the bracket experiment needs both f and g", "f" if not sc.f else "g")
        if len(sc.hbar) != 1:
            fail("the bracket experiment needs exactly one hbar value", "hbar")
    if sc.experiment != "bracket" and sc.system is None and sc.hamiltonian is None:
        fail("a system preset or a hamiltonian is required", "system")
    if any(h < 0 for h in sc.hbar):
        fail("hbar values must be non-negative", "hbar")
    if sc.experiment in ("sweep", "evolve") and not sc.hbar:
        fail("the hbar list must not be empty", "hbar")
    if sc.experiment == "entropy-quantum" and len(sc.hbar) != 1:
        fail("entropy-quantum takes exactly one hbar value (use sweep for several)", "hbar")
    map_only = sc.system in POINT_MAPS or (sc.system or "").startswith("standard-")
    if sc.experiment in ("entropy-quantum", "sweep", "evolve") and map_only:
        fail(f"{sc.system} is a point map without a Hamiltonian; use harmonic, kicked-rotor-K or a "
             f"hamiltonian", "system")
    if not sc.depths or any(d < 0 for d in sc.depths):
        fail("need at least one non-negative depth", "depths")
    if sc.n_max < 1:
        fail("must be at least 1", "n_max")
    if sc.samples < 1:
        fail("must be positive", "samples")
    if sc.method not in ("auto", "exact", "sampled"):
        fail("choose auto, exact or sampled", "method")
    if sc.layer not in ("measure", "algebraic"):
        fail("choose measure or algebraic", "layer")
    if sc.layer == "algebraic" and sc.method == "exact":
        fail("the algebraic layer counts on a sampling plan; use method sampled or auto", "method")
    if sc.estimator not in ("plugin", "grassberger"):
        fail("choose plugin or grassberger", "estimator")
    for e in sc.estimators:
        if e not in ESTIMATORS:
            fail(f"unknown estimator {e!r}; choose from {', '.join(ESTIMATORS)}", "estimators")
    if sc.grid is not None and (sc.grid < 8 or sc.grid % 2):
        fail("grid size must be an even integer >= 8", "grid")
    if sc.workers is not None and sc.workers < 1:
        fail("must be positive", "workers")
    if sc.space is not None:
        if set(sc.space) - {"kind", "L", "Lq", "Lp", "N"}:
            fail(f"unexpected keys {sorted(set(sc.space) - {'kind', 'L', 'Lq', 'Lp', 'N'})}", "space")


# ---------------------------------------------------------- construction

def _space(sc: Scenario) -> PhaseSpace:
    sp = dict(sc.space or {})
    kind = sp.get("kind", "plane-window")
    L = float(_parse_number(sp.get("L", 12 if kind == "plane-window" else "6.283185307179586"), "space"))
    Lq = float(_parse_number(sp.get("Lq", L), "space"))
    Lp = float(_parse_number(sp.get("Lp", L), "space"))
    N = int(sp.get("N", sc.grid or 64))
    try:
        return PhaseSpace(kind, Lq, Lp, N, N)
    except ValueError as exc:
        raise ConfigError(str(exc), "space") from None


def _parse_obs(text, name, space=None) -> Observable:
    try:
        return Observable.parse(str(text), space)
    except (ValueError, TypeError, SyntaxError) as exc:
        raise ConfigError(f"cannot parse {text!r}: {exc}", name) from None


def _grid_obs(text, name, space) -> Observable:
    try:
        return Observable.parse_grid(str(text), space)
    except (ValueError, TypeError, SyntaxError) as exc:
        raise ConfigError(f"cannot evaluate {text!r}: {exc}", name) from None


def _edge_fraction(f: Observable) -> float:
    """Largest |f| on the grid boundary relative to max |f| (0 on a torus)."""
    if f.space.kind == "torus":
        return 0.0
    v = np.abs(f.values)
    top = v.max()
    edge = max(v[0].max(), v[-1].max(), v[:, 0].max(), v[:, -1].max())
    return float(edge / top) if top > 0 else 0.0


def flow_spec(sc: Scenario, hbar) -> FlowSpec:
    h = float(hbar)
    if sc.system == "harmonic":
        return FlowSpec.harmonic(1.0, h, L=12.0, N=sc.grid or 64)
    m = PARAM_SYSTEM.match(sc.system or "")
    if m and m.group(1) == "kicked-rotor":
        return FlowSpec.kicked_rotor(float(m.group(2)), h, N=sc.grid or 256)
    space = _space(sc)
    H = _parse_obs(sc.hamiltonian, "hamiltonian", space)
    try:
        return FlowSpec(space, hamiltonian=H, hbar=h, name=f"H={sc.hamiltonian}")
    except ValueError as exc:
        raise ConfigError(str(exc), "hamiltonian") from None


def _flow_domain(sc: Scenario, spec: FlowSpec):
    if spec.space.kind == "torus":
        return Box(0.0, 0.0, spec.space.Lq, spec.space.Lp)
    r = sc.domain_radius or (HARMONIC_RADIUS if sc.system == "harmonic" else None)
    if r is None:
        raise ConfigError("plane-window flows need an invariant disk radius", "domain_radius")
    return Disk(float(r))


def classical_system(sc: Scenario):
    if sc.system == "cat":
        return cat_map()
    if sc.system == "baker":
        return baker_map()
    if sc.system == "rotation":
        return rotation()
    if sc.system == "harmonic":
        return harmonic_time_one(1.0, sc.domain_radius or HARMONIC_RADIUS)
    m = PARAM_SYSTEM.match(sc.system or "")
    if m and m.group(1) == "standard":
        return standard_map(float(m.group(2)))
    spec = flow_spec(sc, 0)
    return from_flow(spec, _flow_domain(sc, spec))


def _family(domain, depths) -> PartitionFamily:
    box = domain if isinstance(domain, Box) else domain.bounds
    return PartitionFamily.dyadic(box, depths)


def _plan(sc: Scenario) -> SamplingPlan:
    return SamplingPlan(sc.samples, sc.seed)


# ------------------------------------------------------------ outputs

def _clean(x):
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, Fraction):
        return format_rational(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def _cell(x) -> str:
    if x is None:
        return ""
    if isinstance(x, Fraction):
        return format_rational(x)
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return repr(float(x)) if math.isfinite(x) else "nan"
    return str(x)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_cell(v) for v in r])
    return buf.getvalue()


PER_DEPTH_HEADER = ["system", "hbar", "estimator", "depth", "n", "H_n", "d_n", "rate", "converged",
                    "negativity_mass", "method", "samples"]


def _per_depth_rows(report, hbar, estimator, negativity=None):
    out = []
    for i, r in enumerate(report.rows):
        neg = r.negativity_mass if r.negativity_mass is not None else (negativity[i] if negativity else None)
        if not r.entropies:
            out.append([report.system, hbar, estimator, r.depth, 0, None, None, r.rate, r.converged, neg,
                        r.method, r.samples])
        for n, (H, d) in enumerate(zip(r.entropies, r.differences), start=1):
            out.append([report.system, hbar, estimator, r.depth, n, H, d, r.rate, r.converged, neg, r.method,
                        r.samples])
    return out


@dataclass
class RunResult:
    status: int
    summary: dict
    files: dict
    text: str


def tolerances() -> dict:
    return {"convergence_spread_bits": CONV_TOL, "min_occupancy": MIN_OCCUPANCY,
            "negativity_limit": NEGATIVITY_LIMIT}


def write_outputs(result: RunResult, sc: Scenario, outdir) -> None:
    """Write every report file; output is serialised and free of timestamps."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "tool": "moyalks", "version": __version__, "experiment": sc.experiment, "status": result.status,
        "config": sc.to_dict(), "tolerances": tolerances(),
        "files": {k: FILE_FORMATS[k] for k in sorted(list(result.files) + ["summary.json", "manifest.json"])},
    }
    docs = {"manifest.json": json.dumps(_clean(manifest), indent=2, sort_keys=True) + "\n",
            "summary.json": json.dumps(_clean(result.summary), indent=2, sort_keys=True) + "\n"}
    docs.update(result.files)
    for name in sorted(docs):
        (out / name).write_text(docs[name])


# ---------------------------------------------------------- experiments

def run_bracket(sc: Scenario) -> RunResult:
    hbar = sc.hbar[0]
    space = _space(sc) if sc.space else None
    f, g = _parse_obs(sc.f, "f", space), _parse_obs(sc.g, "g", space)
    op = moyal_product if sc.product else moyal_bracket
    res = op(f, g, hbar=hbar)
    text = res.format()
    summary = {"operation": "product" if sc.product else "bracket", "f": sc.f, "g": sc.g, "hbar": hbar,
               "result": text}
    return RunResult(EXIT_OK, summary, {}, text)


def run_evolve(sc: Scenario) -> RunResult:
    if sc.f is None:
        raise ConfigError("the evolve experiment needs an observable f", "f")
    rows, summ = [], []
    classical = None
    notes = []
    for h in sc.hbar:
        spec = flow_spec(sc, h)
        f = _grid_obs(sc.f, "f", spec.space)
        if classical is None:
            classical = liouville_step(f, spec.with_hbar(0.0), sc.t).values
        ev = moyal_step(f, spec, sc.t)
        diff = np.sqrt(np.mean(np.abs(ev.values - classical) ** 2) * spec.space.area)
        rows.append([h, sc.t, ev.steps, diff, ev.mean_drift, ev.negativity_mass])
        summ.append({"hbar": h, "steps": ev.steps, "l2_vs_classical": float(diff), "mean_drift": ev.mean_drift,
                     "negativity_mass": ev.negativity_mass, "notes": list(ev.notes)})
    text = "\n".join(f"hbar={r['hbar']}: L2 distance to classical {r['l2_vs_classical']:.3g}, "
                     f"mean drift {r['mean_drift']:.3g}" for r in summ)
    files = {"evolve.csv": _csv(["hbar", "t", "steps", "l2_vs_classical", "mean_drift", "negativity_mass"],
                                rows)}
    edge = _edge_fraction(f)
    if edge > 1e-8:
        notes.append(f"f is not small at the window edge (edge/max {edge:.2g}); spectral transport "
                     f"treats it as periodic")
        text += "\nnote: " + notes[-1]
    return RunResult(EXIT_OK, {"t": sc.t, "f": sc.f, "rows": summ, "notes": notes}, files, text)


def _report_text(rep, label="") -> str:
    lines = [f"{label}{rep.system}"]
    lines.append(f"  {'depth':>5} {'n':>3} {'rate':>10} {'spread':>8} converged")
    for r in rep.rows:
        spread = "" if r.spread is None else f"{r.spread:.4f}"
        lines.append(f"  {str(r.depth):>5} {r.n_used:>3} {r.rate:>10.5f} {spread:>8} {r.converged}")
    if rep.ks_estimate is not None:
        lines.append(f"  ks_estimate: {rep.ks_estimate:.6f} bits")
    else:
        be = "none" if rep.best_effort is None else f"{rep.best_effort:.6f}"
        lines.append(f"  inconclusive: no partition converged (best effort {be} bits)")
    return "\n".join(lines)


def run_entropy_classical(sc: Scenario) -> RunResult:
    system = classical_system(sc)
    family = _family(system.domain, sc.depths)
    plan = _plan(sc)
    if sc.layer == "algebraic":
        rep = algebraic_ks_of_system(system, family, sc.n_max, plan)
    else:
        rep = ks_entropy(system, family, sc.n_max, plan, sc.method, estimator=sc.estimator,
                         workers=sc.workers)
    files = {"per_depth.csv": _csv(PER_DEPTH_HEADER, _per_depth_rows(rep, 0, "point-map"))}
    summary = {"layer": sc.layer, "report": rep.to_dict()}
    status = EXIT_INCONCLUSIVE if rep.inconclusive else EXIT_OK
    return RunResult(status, summary, files, _report_text(rep))


def run_entropy_quantum(sc: Scenario) -> RunResult:
    spec = flow_spec(sc, sc.hbar[0])
    family = _family(_flow_domain(sc, spec), sc.depths)
    est = sc.estimators[0]
    rep = ks_entropy_quantum(spec, family, sc.n_max, _plan(sc), est, domain=_flow_domain(sc, spec),
                             method=sc.method)
    rows = _per_depth_rows(rep.quantum, sc.hbar[0], est, rep.negativity)
    if rep.classical is not None:
        rows += _per_depth_rows(rep.classical, 0, "classical")
    text = _report_text(rep.quantum, f"[{est}] ")
    if rep.classical is not None:
        text += "\n" + _report_text(rep.classical, "[classical] ")
    text += f"\n  max negativity mass: {rep.max_negativity:.4g}"
    status = EXIT_INCONCLUSIVE if rep.quantum.inconclusive else EXIT_OK
    return RunResult(status, {"report": rep.to_dict()}, {"per_depth.csv": _csv(PER_DEPTH_HEADER, rows)}, text)


def run_sweep(sc: Scenario) -> RunResult:
    hbars = list(sc.hbar)
    if sc.classical_anchor and 0 not in hbars:
        hbars = [Fraction(0)] + hbars
    spec = flow_spec(sc, 0)
    domain = _flow_domain(sc, spec)
    family = _family(domain, sc.depths)
    table = quantum_sweep(spec, [float(h) for h in hbars], family, sc.n_max, _plan(sc), tuple(sc.estimators),
                          domain=domain, method=sc.method)
    rows, inconclusive = [], False
    for h, row in zip(hbars, table):
        for e in sc.estimators:
            inconclusive |= not row.converged[e]
            rows.append([h, e, row.estimates[e], row.converged[e], row.negativity[e], row.classical,
                         row.discrepancy])
    positive = [(h, r) for h, r in zip(hbars, table) if h > 0]
    limit = None
    if positive:
        h0, r0 = min(positive, key=lambda x: x[0])
        limit = {"hbar": h0, "classical": r0.classical,
                 "gap": {e: (None if r0.estimates[e] is None or r0.classical is None
                             else r0.estimates[e] - r0.classical) for e in sc.estimators}}
    summary = {"rows": [dict(r.to_dict(), hbar=h) for h, r in zip(hbars, table)], "classical_limit": limit}
    header = ["hbar", "estimator", "h_hbar", "converged", "negativity_mass", "classical_h", "discrepancy"]
    text = "\n".join(f"hbar={_cell(r[0])} {r[1]}: h={_cell(r[2])} converged={_cell(r[3])} "
                     f"negativity={_cell(r[4])}" for r in rows)
    status = EXIT_INCONCLUSIVE if inconclusive else EXIT_OK
    return RunResult(status, summary, {"sweep.csv": _csv(header, rows)}, text)


RUNNERS = {"bracket": run_bracket, "evolve": run_evolve, "entropy-classical": run_entropy_classical,
           "entropy-quantum": run_entropy_quantum, "sweep": run_sweep}


def run(sc: Scenario) -> RunResult:
    """Execute a validated scenario and write its files if `output` is set."""
    validate(sc)
    result = RUNNERS[sc.experiment](sc)
    if sc.output:
        write_outputs(result, sc, sc.output)
    return result


# ----------------------------------------------------------------- main

def _common(p: argparse.ArgumentParser, system_required: bool = False):
    p.add_argument("--system", required=system_required,
                   help="cat, baker, rotation, harmonic, standard-K or kicked-rotor-K")
    p.add_argument("--hamiltonian", help="explicit Hamiltonian, e.g. 'p^2/2 + q^4/40'")
    p.add_argument("--depths", help="dyadic depths, e.g. 2..6 or 2,3")
    p.add_argument("--n", dest="n_max", type=int, help="largest refinement level")
    p.add_argument("--samples", type=int, help="sampling-plan size (default 10^6)")
    p.add_argument("--seed", type=int, help="sampling-plan seed")
    p.add_argument("--method", choices=("auto", "exact", "sampled"))
    p.add_argument("--grid", type=int, help="grid size for quantum evolution")
    p.add_argument("--workers", type=int, help="worker threads (default: MOYALKS_WORKERS or 1)")
    p.add_argument("--out", dest="output", help="directory for report files")


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="moyalks", description="Moyal brackets and dynamical entropy")
    ap.add_argument("--version", action="version", version=f"moyalks {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bracket", help="Moyal bracket (or product) of two observables")
    b.add_argument("--f", required=True)
    b.add_argument("--g", required=True)
    b.add_argument("--hbar", required=True)
    b.add_argument("--product", action="store_true", help="print f * g instead of the bracket")

    e = sub.add_parser("entropy", help="entropy estimates")
    esub = e.add_subparsers(dest="mode", required=True)
    c = esub.add_parser("classical", help="Kolmogorov-Sinai entropy of a point map")
    _common(c)
    c.add_argument("--layer", choices=("measure", "algebraic"))
    c.add_argument("--estimator", choices=("plugin", "grassberger"))
    q = esub.add_parser("quantum", help="quantum dynamical entropy at one hbar")
    _common(q)
    q.add_argument("--hbar", required=True)
    q.add_argument("--estimator", dest="estimators", choices=ESTIMATORS)
    s = esub.add_parser("sweep", help="quantum entropy over a list of hbar values")
    _common(s)
    s.add_argument("--hbar", required=True, help="comma-separated list")
    s.add_argument("--estimators", help="comma-separated subset of " + ",".join(ESTIMATORS))
    s.add_argument("--classical-anchor", dest="classical_anchor", action="store_true", default=None)

    r = sub.add_parser("run", help="run a scenario from a YAML or JSON config")
    r.add_argument("--config", required=True)
    _common(r)
    r.add_argument("--hbar")
    return ap


def _overrides(args) -> dict:
    keys = ("system", "hamiltonian", "depths", "n_max", "samples", "seed", "method", "grid", "workers",
            "output", "layer", "estimator", "estimators", "hbar", "f", "g", "product", "classical_anchor")
    out = {}
    for k in keys:
        v = getattr(args, k, None)
        if v is None or (k == "product" and not v):
            continue
        if k == "estimators" and isinstance(v, str):
            v = [t.strip() for t in v.split(",") if t.strip()]
        out[k] = v
    return out


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        if args.command == "run":
            data, lines = load_config(args.config)
            data.update(_overrides(args))
            sc = build_scenario(data, lines)
        else:
            data = _overrides(args)
            if args.command == "bracket":
                data["experiment"] = "bracket"
            else:
                data["experiment"] = {"classical": "entropy-classical", "quantum": "entropy-quantum",
                                      "sweep": "sweep"}[args.mode]
            sc = build_scenario(data)
        result = run(sc)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (StabilityError, ResolutionError, DegenerateFitError) as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except UnsupportedError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MoyalKSError as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(result.text)
    return result.status


if __name__ == "__main__":
    sys.exit(main())
