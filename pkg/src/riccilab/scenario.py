"""Declarative scenarios: load, validate, execute and summarise.

A run directory holds ``manifest.json`` (job states and file list),
``summary.json``, one ``reports/<id>.json`` per verifier, CSV series and
``.snap`` snapshots of the first and last metric.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np
import yaml

from . import _kernels
from .errors import ConfigError, RiccilabError
from .fixtures import REGISTRY, fixture_trace, get_fixture
from .io import (
    BLOWDOWN_COLUMNS,
    ENTROPY_COLUMNS,
    MANIFEST,
    MONITOR_COLUMNS,
    csv_text,
    json_text,
    load_manifest,
    read_csv,
    write_snapshot,
    write_text,
)
from .report import BoundReport

log = logging.getLogger("riccilab")

SCHEMA_VERSION = 1
BACKENDS = ("torus", "radial", "homothety", "product")
VERIFIER_KINDS = (
    "gradient",
    "harnack",
    "envelope",
    "center_f",
    "sobolev",
    "distance_doubling",
    "volume_comparability",
    "type3",
)

EXIT_OK, EXIT_VERIFIER_FAILED, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3

_point = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}
_pos = {"type": "number", "exclusiveMinimum": 0}

SCHEMA = {
    "type": "object",
    "required": ["schema_version", "name", "backend", "initial", "flow"],
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "name": {"type": "string", "pattern": "^[A-Za-z0-9_.-]+$"},
        "description": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
        "backend": {"enum": list(BACKENDS)},
        "output": {"type": "string"},
        "initial": {
            "type": "object",
            "required": ["fixture"],
            "additionalProperties": False,
            "properties": {"fixture": {"enum": sorted(REGISTRY)}, "params": {"type": "object"}},
        },
        "flow": {
            "type": "object",
            "required": ["horizon"],
            "additionalProperties": False,
            "properties": {
                "horizon": _pos,
                "t_start": {"type": "number", "minimum": 0},
                "snapshots": {"type": "integer", "minimum": 2},
                "policy": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {"cfl": _pos, "dt_max": _pos, "save_every": _pos, "trust_factor": _pos},
                },
            },
        },
        "kernels": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "direction", "point", "time"],
                "additionalProperties": False,
                "properties": {
                    "id": {"type": "string"},
                    "direction": {"enum": ["forward", "conjugate"]},
                    "point": _point,
                    "time": {"type": "number"},
                    "until": {"type": "number"},
                    "width_cells": {"type": "number", "minimum": 2},
                    "store": {
                        "type": "object",
                        "required": ["start", "stop", "count"],
                        "additionalProperties": False,
                        "properties": {
                            "start": {"type": "number"},
                            "stop": {"type": "number"},
                            "count": {"type": "integer", "minimum": 2},
                        },
                    },
                    "entropy": {"type": "boolean"},
                },
            },
        },
        "verifiers": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "kind"],
                "additionalProperties": False,
                "properties": {
                    "id": {"type": "string"},
                    "kind": {"enum": list(VERIFIER_KINDS)},
                    "kernel": {"type": "string"},
                    "tolerance": _pos,
                    "window": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
                    "delta": _pos,
                    "C1": _pos,
                    "pairs": {
                        "type": "array",
                        "items": {"type": "array", "items": [_point, _point, _pos], "minItems": 3, "maxItems": 3},
                    },
                    "x": _point,
                    "y": _point,
                    "r": _pos,
                    "s": {"type": "number"},
                    "t": {"type": "number"},
                    "kappa": _pos,
                    "A": _pos,
                    "samples": {"type": "integer", "minimum": 1},
                },
            },
        },
        "blowdown": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "point": _point,
                "count": {"type": "integer", "minimum": 3},
                "tau0": _pos,
                "t_offset": {"type": "number", "minimum": 0},
                "s": {"type": "number", "minimum": 1, "maximum": 3},
            },
        },
    },
}


@dataclass
class Scenario:
    config: dict
    path: Path | None = None
    seed: int = 0
    out: Path | None = None

    @property
    def name(self):
        return self.config["name"]


def _field_path(err):
    parts = [str(p) for p in err.absolute_path]
    if err.validator == "required":
        missing = err.message.split("'")[1]
        parts.append(missing)
    elif err.validator == "additionalProperties" and "'" in err.message:
        parts.append(err.message.split("'")[1])
    return ".".join(parts) or "<root>"


def validate_config(config):
    if not isinstance(config, dict):
        raise ConfigError("scenario must be a mapping", "<root>")
    errors = sorted(jsonschema.Draft7Validator(SCHEMA).iter_errors(config), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        where = _field_path(err)
        raise ConfigError(err.message, where)
    fx = get_fixture(config["initial"]["fixture"])
    if fx.backend != config["backend"]:
        raise ConfigError(
            f"fixture {fx.name!r} is {fx.backend!r}, config says {config['backend']!r}", "backend"
        )
    ids = [k["id"] for k in config.get("kernels", [])]
    if len(set(ids)) != len(ids):
        raise ConfigError("duplicate id", "kernels")
    vids = [v["id"] for v in config.get("verifiers", [])]
    if len(set(vids)) != len(vids):
        raise ConfigError("duplicate id", "verifiers")
    for i, v in enumerate(config.get("verifiers", [])):
        needs_kernel = v["kind"] in ("gradient", "harnack", "envelope", "center_f")
        if needs_kernel and v.get("kernel") not in ids:
            raise ConfigError(f"unknown kernel {v.get('kernel')!r}", f"verifiers.{i}.kernel")
    return config


def load_scenario(path, seed=None, out=None):
    path = Path(path)
    try:
        config = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}", "config") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path} is not valid YAML: {exc}", "config") from None
    validate_config(config)
    seed = config.get("seed", 0) if seed is None else int(seed)
    if out is None:
        out = config.get("output")
    if out is None:
        out = Path(os.environ.get("RICCILAB_OUT", "runs")) / config["name"]
    return Scenario(config, path, seed, Path(out))


# --- execution ------------------------------------------------------------------


def _policy(cfg):
    from .flow import StepPolicy

    return StepPolicy(**cfg) if cfg else None


def _solve_kernel(trace, job):
    from .heat import grid_spacing, solve_conjugate_kernel, solve_forward_heat

    t = job["time"]
    width = job.get("width_cells", 3.0) * grid_spacing(trace.state_at(t))
    store = job.get("store")
    times = None if store is None else np.linspace(store["start"], store["stop"], store["count"])
    if job["direction"] == "forward":
        return solve_forward_heat(trace, job["point"], t, width, t_end=job.get("until"), store_times=times)
    return solve_conjugate_kernel(trace, job["point"], t, width, t_stop=job.get("until"), store_times=times)


def _type3_report(trace):
    from .flow import fit_type3_constant

    rep = fit_type3_constant(trace)
    margin = float(np.min(rep.margin)) if len(rep.margin) else float("nan")
    return BoundReport(
        name="type III constant",
        target="sup|Rm|(t) <= A/(A+t)",
        passed=rep.feasible,
        worst_margin=margin,
        fitted_constants={"A_star": rep.A_star},
        details={"reason": rep.reason},
    )


def _run_verifier(v, trace, kernels, seed):
    from . import bounds, flow

    kind = v["kind"]
    tol = v.get("tolerance")
    kw = {}
    if kind == "gradient":
        k = kernels[v["kernel"]]
        window = v.get("window", (k.times[0], k.times[-1]))
        return bounds.verify_gradient_estimate(k, tuple(window))
    if kind == "harnack":
        k = kernels[v["kernel"]]
        pairs = [(tuple(x), tuple(y), t) for x, y, t in v["pairs"]]
        if tol is not None:
            kw["stability"] = tol
        return bounds.verify_harnack_growth(k, v.get("delta", 1.0), pairs, C1=v.get("C1", math.e), **kw)
    if kind == "envelope":
        if tol is not None:
            kw["stability"] = tol
        return bounds.verify_kernel_envelope(kernels[v["kernel"]], **kw)
    if kind == "center_f":
        return bounds.verify_center_f_bound(kernels[v["kernel"]])
    if kind == "sobolev":
        if tol is not None:
            kw["stability"] = tol
        t = v["t"]
        return bounds.verify_sobolev(
            trace.state_at(t), t, v.get("kappa", 1.0), v.get("A", 1.0), v.get("samples", 32), seed=seed, **kw
        )
    if tol is not None:
        kw["tol"] = tol
    if kind == "distance_doubling":
        return flow.check_distance_doubling(trace, tuple(v["x"]), tuple(v["y"]), v["s"], v["t"], **kw)
    if kind == "volume_comparability":
        return flow.check_volume_comparability(trace, tuple(v["x"]), v["r"], v["s"], v["t"], **kw)
    return _type3_report(trace)


def _monitor_rows(trace):
    rows = []
    for st in trace:
        rep = st.curvature()
        rows.append({"t": st.t, "sup_rm": rep.sup_rm, "min_R": float(np.min(rep.R)), "max_R": float(np.max(rep.R))})
    return rows


def _entropy_rows(trace, kernel, job):
    from .entropy import Wplus_derivative_series

    store = job.get("store")
    if store is not None:
        times = np.linspace(store["start"], store["stop"], store["count"])
    else:
        # skip the smoothed delta near the sink
        times = kernel.times[kernel.tau(kernel.times) >= 10.0 * kernel.width**2]
    return Wplus_derivative_series(trace, kernel, times=times).rows()


def _blowdown_rows(trace, cfg, t_offset):
    from .blowdown import build_blowdown_sequence, entropy_sequence, soliton_limit_report

    taus = None
    if "tau0" in cfg:
        taus = cfg["tau0"] * 2.0 ** np.arange(cfg.get("count", 5))
    seq = build_blowdown_sequence(
        trace, tuple(cfg.get("point", (0.0, 0.0))), taus=taus, count=cfg.get("count", 5), t_offset=t_offset
    )
    es = entropy_sequence(seq)
    rep = soliton_limit_report(seq, s=cfg.get("s", 2.0))
    return es, rep


def _blowdown_csv_rows(es, rep):
    # D_k uses the potential carried by exact families when there is one,
    # the kernel-derived potential otherwise
    D = rep.D_potential if rep.D_potential is not None else rep.D_kernel
    flags = ";".join(rep.flags)
    return [
        {
            "k": row["k"],
            "s": rep.s,
            "W_plus": float(np.interp(rep.s, es.s, es.W[row["k"]])),
            "D_k": float(D[row["k"]]),
            "profile_dist": row["profile_dist"],
            "flags": flags,
        }
        for row in rep.rows
    ]


class _Runner:
    def __init__(self, sc, threads=1):
        self.sc = sc
        self.threads = max(1, int(threads))
        self.out = sc.out
        self.jobs = {}
        self.files = {}
        self.reports = {}

    def _write(self, rel, text):
        write_text(self.out / rel, text)
        self.files[rel] = hashlib.sha256(text.encode()).hexdigest()

    def _map(self, fn, items):
        if self.threads == 1 or len(items) < 2:
            return [self._guard(fn, it) for it in items]
        with ThreadPoolExecutor(self.threads) as ex:
            return list(ex.map(lambda it: self._guard(fn, it), items))

    def _guard(self, fn, item):
        try:
            return fn(item), None
        except RiccilabError as exc:
            return None, f"{type(exc).__name__}: {exc}"
        except (ValueError, FloatingPointError, ArithmeticError) as exc:
            return None, f"{type(exc).__name__}: {exc}"

    def _manifest(self, status):
        cfg = self.sc.config
        m = {
            "schema_version": SCHEMA_VERSION,
            "scenario": cfg["name"],
            "seed": self.sc.seed,
            "status": status,
            "fixture": cfg["initial"]["fixture"],
            "in_hypothesis_fixture": get_fixture(cfg["initial"]["fixture"]).in_hypothesis,
            "stencil_backend": _kernels.BACKEND,
            "jobs": self.jobs,
            "files": dict(sorted(self.files.items())),
        }
        write_text(self.out / MANIFEST, json_text(m))

    def run(self):
        cfg = self.sc.config
        self.out.mkdir(parents=True, exist_ok=True)
        for k in cfg.get("kernels", []):
            self.jobs[f"kernel:{k['id']}"] = "pending"
        for v in cfg.get("verifiers", []):
            self.jobs[f"verifier:{v['id']}"] = "pending"
        if "blowdown" in cfg:
            self.jobs["blowdown"] = "pending"
        self.jobs["flow"] = "pending"
        self._manifest("running")

        flow_cfg = cfg["flow"]
        t_start = flow_cfg.get("t_start", 0.0)
        try:
            trace = fixture_trace(
                cfg["initial"]["fixture"],
                flow_cfg["horizon"],
                cfg["initial"].get("params"),
                policy=_policy(flow_cfg.get("policy")),
                t_start=t_start,
                snapshots=flow_cfg.get("snapshots", 41),
            )
        except RiccilabError as exc:
            self.jobs["flow"] = f"failed: {type(exc).__name__}: {exc}"
            self._manifest("failed")
            return EXIT_RUNTIME
        self.jobs["flow"] = "done"
        self._write("flow_monitor.csv", csv_text(MONITOR_COLUMNS, _monitor_rows(trace)))
        for tag, st in (("initial", trace[0]), ("final", trace[len(trace) - 1])):
            p = write_snapshot(self.out / f"{tag}.snap", st)
            self.files[f"{tag}.snap"] = hashlib.sha256(p.read_bytes()).hexdigest()
        log.info("flow: %d snapshots on [%g, %g]", len(trace), trace.t_start, trace.t_end)

        failed = False
        kernels = {}
        jobs = cfg.get("kernels", [])
        for job, (sol, err) in zip(jobs, self._map(lambda j: _solve_kernel(trace, j), jobs)):
            key = f"kernel:{job['id']}"
            if err:
                self.jobs[key] = f"failed: {err}"
                failed = True
                continue
            kernels[job["id"]] = sol
            self.jobs[key] = "done"
            log.info("kernel %s: %d stored times, mass drift %.2e", job["id"], len(sol.times), np.ptp(sol.mass))
            if job["direction"] == "conjugate" and job.get("entropy", True):
                rows, err = self._guard(lambda s: _entropy_rows(trace, s, job), sol)
                if err:
                    self.jobs[key] = f"done; entropy failed: {err}"
                    failed = True
                else:
                    self._write(f"entropy_{job['id']}.csv", csv_text(ENTROPY_COLUMNS, rows))

        vers = [v for v in cfg.get("verifiers", []) if v.get("kernel") is None or v["kernel"] in kernels]
        for v in cfg.get("verifiers", []):
            if v not in vers:
                self.jobs[f"verifier:{v['id']}"] = "skipped: kernel failed"
        results = self._map(lambda v: _run_verifier(v, trace, kernels, self.sc.seed), vers)
        for v, (rep, err) in zip(vers, results):
            key = f"verifier:{v['id']}"
            if err:
                self.jobs[key] = f"failed: {err}"
                failed = True
                continue
            self.jobs[key] = "done"
            self.reports[v["id"]] = rep
            self._write(f"reports/{v['id']}.json", rep.to_json())
            log.info("verifier %s: %s", v["id"], rep.verdict)

        blow = None
        if "blowdown" in cfg:
            res, err = self._guard(lambda c: _blowdown_rows(trace, c, t_start), cfg["blowdown"])
            if err:
                self.jobs["blowdown"] = f"failed: {err}"
                failed = True
            else:
                es, rep = res
                self.jobs["blowdown"] = "done"
                self._write("blowdown.csv", csv_text(BLOWDOWN_COLUMNS, _blowdown_csv_rows(es, rep)))
                blow = {
                    "s": np.asarray(es.s).tolist(),
                    "W_plus": np.asarray(es.W).tolist(),
                    "monotone": es.monotone,
                    "cauchy": es.cauchy,
                    "limit": np.asarray(es.limit).tolist(),
                    "trailing_increment": np.asarray(es.trailing_increment).tolist(),
                    "report": rep.to_dict(),
                }
                self._write("blowdown_summary.json", json_text(blow))

        verdicts = {
            vid: {
                "name": r.name,
                "target": r.target,
                "pass": r.passed,
                "verdict": r.verdict,
                "in_hypothesis": r.in_hypothesis,
                "hypothesis_flags": r.hypothesis_flags,
                "worst_margin": r.worst_margin,
                "slack": r.slack,
                "fitted_constants": r.fitted_constants,
            }
            for vid, r in sorted(self.reports.items())
        }
        ok = all(r.passed for r in self.reports.values() if r.in_hypothesis)
        code = EXIT_RUNTIME if failed else (EXIT_OK if ok else EXIT_VERIFIER_FAILED)
        summary = {
            "scenario": cfg["name"],
            "seed": self.sc.seed,
            "fixture": cfg["initial"]["fixture"],
            "verifiers": verdicts,
            "all_in_hypothesis_pass": ok,
            "complete": not failed,
            "exit_code": code,
        }
        if blow is not None:
            summary["blowdown"] = {k: blow[k] for k in ("monotone", "cauchy")}
        self._write("summary.json", json_text(summary))
        self._manifest("failed" if failed else "complete")
        return code


def run_scenario(path_or_scenario, seed=None, out=None, threads=1):
    """Execute a scenario; returns the exit status (0 ok, 1 verifier failure, 2 config, 3 runtime)."""
    sc = path_or_scenario
    if not isinstance(sc, Scenario):
        sc = load_scenario(sc, seed=seed, out=out)
    return _Runner(sc, threads).run()


# --- reporting ------------------------------------------------------------------


def _fmt_num(x):
    if isinstance(x, float):
        return f"{x:.6g}"
    return str(x)


def emit_report(run_dir):
    """Aligned text summary of a (possibly partial) run directory."""
    run_dir = Path(run_dir)
    man = load_manifest(run_dir)
    lines = [f"scenario {man['scenario']}  seed {man['seed']}  status {man['status']}", ""]
    incomplete = {k: v for k, v in man["jobs"].items() if v != "done"}
    reports = {}
    for rel in sorted(man["files"]):
        if rel.startswith("reports/"):
            reports[rel[len("reports/") : -len(".json")]] = json.loads((run_dir / rel).read_text())
    vkeys = sorted(k.split(":", 1)[1] for k in man["jobs"] if k.startswith("verifier:"))
    if vkeys:
        w = max(len(k) for k in vkeys)
        lines.append(f"{'verifier':{w}s}  verdict                   margin        slack         flags")
        for vid in vkeys:
            r = reports.get(vid)
            if r is None:
                lines.append(f"{vid:{w}s}  INCOMPLETE ({man['jobs']['verifier:' + vid]})")
                continue
            flags = ",".join(r["hypothesis_flags"]) or "-"
            lines.append(
                f"{vid:{w}s}  {r['verdict']:24s}  {_fmt_num(r['worst_margin']):12s}  {_fmt_num(r['slack']):12s}  {flags}"
            )
        lines.append("")
        lines.append("fitted constants")
        for vid in vkeys:
            r = reports.get(vid)
            if r is None:
                continue
            consts = ", ".join(f"{k}={_fmt_num(v)}" for k, v in sorted(r["fitted_constants"].items()))
            lines.append(f"  {vid}: {consts or '-'}")
            lines.append(f"    target: {r['target']}")
    for rel in sorted(man["files"]):
        if rel.endswith(".csv") and rel != "flow_monitor.csv":
            rows = read_csv(run_dir / rel)
            lines.append("")
            lines.append(rel)
            if rows:
                cols = list(rows[0].keys())
                lines.append("  " + "  ".join(f"{c:>14s}" for c in cols))
                for row in rows:
                    cells = []
                    for c in cols:
                        v = row[c]
                        try:
                            v = f"{float(v):.6g}"
                        except ValueError:
                            pass
                        cells.append(f"{v:>14s}")
                    lines.append("  " + "  ".join(cells))
    if incomplete:
        lines.append("")
        lines.append("incomplete jobs")
        for k, v in sorted(incomplete.items()):
            lines.append(f"  {k}: {v}")
    return "\n".join(lines) + "\n"
