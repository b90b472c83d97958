"""Experiment runner: interpreters x metrics over a set of instances.

A run writes into ``out``:

* ``results.csv``   one row per (instance, method); deterministic given the config
* ``ablation.csv``  per-step CPP / label change, when the ``ablation`` metric is on
* ``skipped.csv``   instances excluded before interpretation, with the reason
* ``summary.json``  mean/min/max per method and metric, NLCI per step
* ``metadata.json`` config echo, wall-clock timings, library versions
"""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .api import PredictionApi, connect_http, metered, wrap_in_process
from .interpreters import (
    SATURATION_PROB,
    gradient_baselines,
    lime_interpret,
    naive_interpret,
    openapi_interpret,
    zoo_interpret,
)
from .linsys import SaturationError
from .metrics import (
    UndefinedSimilarity,
    ablation_curve,
    cosine_consistency,
    l1_exactness,
    nearest_neighbors,
    region_difference,
    summarize,
    weight_difference,
)
from .models import (
    BoundaryError,
    build_synthetic_plm,
    ground_truth_decision_features,
    load_model,
    random_relu_net,
)

logger = logging.getLogger(__name__)

METHODS = ("openapi", "naive", "zoo", "lime_linear", "lime_ridge", "saliency", "grad_input", "integrated")
WHITE_BOX_METHODS = {"saliency", "grad_input", "integrated"}
METRICS = ("l1", "rd", "wd", "cs", "ablation")
ORACLE_METRICS = {"l1", "rd", "wd"}

DEFAULT_PARAMS = {
    "openapi": {"max_iter": 100},
    "naive": {"r": 1e-4},
    "zoo": {"h": 1e-4},
    "lime_linear": {"r": 1e-4, "n_samples": 1000},
    "lime_ridge": {"r": 1e-4, "n_samples": 1000, "lambda": 1.0},
    "saliency": {},
    "grad_input": {},
    "integrated": {"steps": 300},
}

RESULT_FIELDS = [
    "instance", "method", "status", "c", "converged", "iterations", "r_final",
    "queries", "l1", "rd", "wd", "cs", "error",
]


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    model: dict
    methods: dict
    instances: dict = field(default_factory=lambda: {"count": 200, "seed": 0})
    metrics: list = field(default_factory=lambda: ["l1", "rd", "wd"])
    out: str | None = None
    seed: int = 0
    jobs: int | None = None
    ablation_steps: int = 200

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        doc = dict(doc)
        unknown = set(doc) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "model" not in doc or "methods" not in doc:
            raise ConfigError("config needs 'model' and 'methods'")
        methods = doc["methods"]
        if isinstance(methods, str):
            methods = methods.split(",")
        if isinstance(methods, list):
            methods = {m: {} for m in methods}
        doc["methods"] = {m: {**DEFAULT_PARAMS.get(m, {}), **(p or {})} for m, p in methods.items()}
        cfg = cls(**doc)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                return cls.from_dict(json.load(fh))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc

    @property
    def endpoint_only(self) -> bool:
        return "endpoint" in self.model

    def validate(self):
        sources = [k for k in ("file", "synthetic", "endpoint") if k in self.model]
        if len(sources) != 1:
            raise ConfigError("model needs exactly one of 'file', 'synthetic', 'endpoint'")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ConfigError(f"unknown methods {bad}; choose from {list(METHODS)}")
        bad = [m for m in self.metrics if m not in METRICS]
        if bad:
            raise ConfigError(f"unknown metrics {bad}; choose from {list(METRICS)}")
        if self.endpoint_only:
            wb = sorted(WHITE_BOX_METHODS & set(self.methods))
            om = sorted(ORACLE_METRICS & set(self.metrics))
            if wb or om:
                raise ConfigError(f"endpoint-only model cannot run white-box methods {wb} or oracle metrics {om}")
        if not ({"file", "count"} & set(self.instances)):
            raise ConfigError("instances needs 'file' or 'count'")


def synthetic_model(spec: dict):
    kind = spec.get("kind", "tree")
    if kind == "tree":
        return build_synthetic_plm(spec["d"], spec["C"], spec.get("depth", 2), spec.get("seed", 0))
    if kind == "relu":
        return random_relu_net(spec["widths"], spec.get("seed", 0), spec.get("scale", 1.0))
    raise ConfigError(f"unknown synthetic model kind {kind!r}")


def resolve_model(cfg: ExperimentConfig):
    """(white-box model or None, PredictionApi)."""
    if "endpoint" in cfg.model:
        return None, connect_http(cfg.model["endpoint"])
    model = load_model(cfg.model["file"]) if "file" in cfg.model else synthetic_model(cfg.model["synthetic"])
    return model, wrap_in_process(model)


def load_instances(path, d: int) -> np.ndarray:
    """Rows of comma/whitespace separated numbers (``.csv``/``.txt``) or raw float64 (``.npy``)."""
    path = Path(path)
    if path.suffix == ".npy":
        X = np.load(path)
    else:
        X = np.loadtxt(path, delimiter="," if path.suffix == ".csv" else None, ndmin=2)
    if X.ndim != 2 or X.shape[1] != d:
        raise ConfigError(f"instance file {path} has shape {X.shape}, model expects d={d}")
    return X.astype(np.float64)


def make_instances(cfg: ExperimentConfig, d: int) -> np.ndarray:
    src = cfg.instances
    if "file" in src:
        return load_instances(src["file"], d)
    rng = np.random.default_rng(src.get("seed", cfg.seed))
    return rng.uniform(0.0, 1.0, size=(int(src["count"]), d))


def _run_method(name, params, api, model, x0, c, seed):
    """Returns (DecisionFeatures or None, extra record fields)."""
    if name == "openapi":
        res = openapi_interpret(api, x0, c, max_iter=int(params["max_iter"]), seed=seed)
        extra = {"converged": res.converged, "iterations": res.iterations, "r_final": res.r_final}
        return res.features, extra
    if name == "naive":
        return naive_interpret(api, x0, c, r=float(params["r"]), seed=seed), {}
    if name == "zoo":
        return zoo_interpret(api, x0, c, h=float(params["h"])), {}
    if name in ("lime_linear", "lime_ridge"):
        lam = float(params.get("lambda", 0.0)) if name == "lime_ridge" else 0.0
        f = lime_interpret(api, x0, c, r=float(params["r"]), n_samples=int(params["n_samples"]), ridge=lam, seed=seed)
        return f, {}
    variant = {"saliency": "saliency", "grad_input": "grad_input", "integrated": "integrated"}[name]
    f = gradient_baselines(model, x0, c, variant, baseline=params.get("baseline"), steps=int(params.get("steps", 300)))
    return f, {}


def _interpret_instance(cfg, model, api, iid, x0):
    """All configured methods on one instance. Returns (records, features, skip_reason, timings)."""
    y0 = api.predict(x0)
    if np.max(y0) > SATURATION_PROB:
        return [], {}, f"saturated (max prob {np.max(y0):.17g})", {}
    if model is not None:
        try:
            model.extract_local_form(x0)
        except BoundaryError as err:
            return [], {}, f"boundary ({err})", {}
    c = int(np.argmax(y0))
    truth = ground_truth_decision_features(model.extract_local_form(x0), c) if model is not None else None
    records, feats, timings = [], {}, {}
    for mi, (name, params) in enumerate(cfg.methods.items()):
        seed = [int(cfg.seed), int(iid), mi]
        local = metered(api)
        rec = {"instance": iid, "method": name, "status": "ok", "c": c}
        t0 = time.perf_counter()
        try:
            f, extra = _run_method(name, params, local, model, x0, c, seed)
            rec.update(extra)
        except (SaturationError, BoundaryError, ArithmeticError, ValueError, RuntimeError) as err:
            f = None
            rec.update(status="error", error=f"{type(err).__name__}: {err}")
        timings[f"{iid}/{name}"] = time.perf_counter() - t0
        rec["queries"] = local.ledger.count
        if f is not None:
            feats[name] = f
            if truth is not None and "l1" in cfg.metrics:
                rec["l1"] = l1_exactness(f.weights, truth)
            if f.cloud is not None and model is not None:
                if "rd" in cfg.metrics:
                    rec["rd"] = region_difference(model, x0, f.cloud)
                if "wd" in cfg.metrics:
                    rec["wd"] = weight_difference(model, x0, f.cloud, c)
        elif rec["status"] == "ok":
            rec["status"] = "not_converged"
        records.append(rec)
    return records, feats, None, timings


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_csv(path, fieldnames, rows):
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=fieldnames, lineterminator="\r\n", extrasaction="ignore")
    w.writeheader()
    for row in rows:
        w.writerow({k: _fmt(row.get(k)) for k in fieldnames})
    Path(path).write_text(buf.getvalue(), newline="")


def summarize_records(records, methods, metrics=("l1", "rd", "wd", "cs", "iterations", "r_final", "queries")) -> dict:
    out = {}
    for m in methods:
        rows = [r for r in records if r["method"] == m]
        entry = {
            "n": len(rows),
            "ok": sum(r["status"] == "ok" for r in rows),
            "errors": sum(r["status"] == "error" for r in rows),
        }
        for key in metrics:
            vals = [r.get(key) for r in rows if r.get(key) not in (None, "")]
            if vals:
                entry[key] = summarize(float(v) for v in vals)
        out[m] = entry
    return out


@dataclass
class ExperimentResult:
    records: list
    summary: dict
    skipped: list
    features: dict  # (instance, method) -> DecisionFeatures
    curves: dict  # (instance, method) -> AblationCurve
    instances: np.ndarray


def run_experiment(cfg: ExperimentConfig, api: PredictionApi | None = None, model=None) -> ExperimentResult:
    """Run every configured method on every unsaturated instance.

    ``api``/``model`` override the config's model source (for tests and for
    running against an already-open endpoint).
    """
    cfg.validate()
    if api is None:
        model, api = resolve_model(cfg)
    X = make_instances(cfg, api.d)
    jobs = cfg.jobs or os.cpu_count() or 1
    started = time.time()

    def task(iid):
        return _interpret_instance(cfg, model, api, iid, X[iid])

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outputs = list(pool.map(task, range(len(X))))
    else:
        outputs = [task(i) for i in range(len(X))]

    records, skipped, features, timings = [], [], {}, {}
    for iid, (recs, feats, reason, times) in enumerate(outputs):
        if reason is not None:
            logger.warning("skipping instance %d: %s", iid, reason)
            skipped.append({"instance": iid, "reason": reason})
            continue
        records.extend(recs)
        timings.update(times)
        for name, f in feats.items():
            features[(iid, name)] = f

    if "cs" in cfg.metrics:
        kept = sorted({r["instance"] for r in records})
        if len(kept) > 1:
            nn = nearest_neighbors(X[kept])
            partner = {iid: kept[j] for iid, j in zip(kept, nn)}
            for r in records:
                a = features.get((r["instance"], r["method"]))
                b = features.get((partner[r["instance"]], r["method"]))
                if a is not None and b is not None:
                    try:
                        r["cs"] = cosine_consistency(a.weights, b.weights)
                    except UndefinedSimilarity:
                        pass

    curves = {}
    if "ablation" in cfg.metrics:
        for (iid, name), f in sorted(features.items()):
            curves[(iid, name)] = ablation_curve(api, X[iid], f.weights, cfg.ablation_steps)

    summary = {
        "methods": summarize_records(records, list(cfg.methods)),
        "instances": {"total": len(X), "evaluated": len(X) - len(skipped), "skipped": len(skipped)},
    }
    if curves:
        summary["ablation"] = _ablation_summary(curves, list(cfg.methods))

    result = ExperimentResult(records, summary, skipped, features, curves, X)
    if cfg.out:
        _write_outputs(cfg, result, timings, time.time() - started)
    return result


def _ablation_summary(curves, methods):
    out = {}
    for m in methods:
        cs = [cv for (_, name), cv in curves.items() if name == m]
        if not cs:
            continue
        steps = max(len(cv.cpp) for cv in cs)
        out[m] = {
            "mean_cpp": [float(np.mean([cv.cpp[t] for cv in cs if len(cv.cpp) > t])) for t in range(steps)],
            "nlci": [int(sum(bool(cv.label_changed[t]) for cv in cs if len(cv.cpp) > t)) for t in range(steps)],
        }
    return out


def _write_outputs(cfg, result, timings, elapsed):
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "results.csv", RESULT_FIELDS, result.records)
    write_csv(out / "skipped.csv", ["instance", "reason"], result.skipped)
    if result.curves:
        rows = [
            {"instance": iid, "method": m, "step": t + 1, "feature": int(cv.order[t]),
             "cpp": float(cv.cpp[t]), "label_changed": bool(cv.label_changed[t])}
            for (iid, m), cv in sorted(result.curves.items())
            for t in range(len(cv.cpp))
        ]
        write_csv(out / "ablation.csv", ["instance", "method", "step", "feature", "cpp", "label_changed"], rows)
    (out / "summary.json").write_text(json.dumps(result.summary, indent=2, sort_keys=True))
    meta = {
        "finished": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "elapsed_s": elapsed,
        "config": {k: getattr(cfg, k) for k in cfg.__dataclass_fields__},
        "timings_s": timings,
        "python": platform.python_version(),
        "numpy": np.__version__,
    }
    (out / "metadata.json").write_text(json.dumps(meta, indent=2, default=str))
