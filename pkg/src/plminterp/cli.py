"""Command line entry point: ``plminterp {gen-model,serve,interpret,experiment,render}``.

Exit status is 0 on success, 1 for configuration errors, 2 for runtime failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time

import numpy as np

from .api import connect_http, serve_http, wrap_in_process
from .harness import METHODS, ConfigError, ExperimentConfig, run_experiment, synthetic_model
from .interpreters import gradient_baselines, lime_interpret, naive_interpret, openapi_interpret, zoo_interpret
from .models import load_model, save_model
from .render import render_heatmap

EXIT_CONFIG = 1
EXIT_RUNTIME = 2


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.replace(",", " ").split()]


def _methods(text: str) -> list[str]:
    names = [m.strip() for m in text.split(",") if m.strip()]
    bad = [m for m in names if m not in METHODS]
    if bad:
        raise ConfigError(f"unknown methods {bad}; choose from {list(METHODS)}")
    return names


def cmd_gen_model(args):
    if args.kind == "tree":
        spec = {"kind": "tree", "d": args.d, "C": args.C, "depth": args.depth, "seed": args.seed}
    else:
        if not args.widths:
            raise ConfigError("--widths is required for relu models")
        spec = {"kind": "relu", "widths": [int(w) for w in args.widths.split(",")], "seed": args.seed}
    save_model(synthetic_model(spec), args.out)
    print(args.out)


def cmd_serve(args):
    model = load_model(args.model)
    server = serve_http(model, args.host, args.port)
    print(f"serving d={model.d} C={model.n_classes} at {server.url}", flush=True)
    try:
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        pass
    finally:
        server.shutdown()


def _api_from_args(args):
    if bool(args.model) == bool(args.endpoint):
        raise ConfigError("give exactly one of --model FILE or --endpoint URL")
    if args.endpoint:
        return None, connect_http(args.endpoint)
    model = load_model(args.model)
    return model, wrap_in_process(model)


def cmd_interpret(args):
    model, api = _api_from_args(args)
    x0 = np.array(_floats(args.x))
    if x0.shape != (api.d,):
        raise ConfigError(f"--x has {x0.size} values, model expects {api.d}")
    out = {}
    for name in _methods(args.method):
        if name in ("saliency", "grad_input", "integrated"):
            if model is None:
                raise ConfigError(f"{name} needs --model (white-box access)")
            c = args.cls if args.cls is not None else int(np.argmax(api.predict(x0)))
            f = gradient_baselines(model, x0, c, name)
            out[name] = {"c": c, "weights": f.weights.tolist()}
            continue
        before = api.ledger.count
        if name == "openapi":
            res = openapi_interpret(api, x0, args.cls, max_iter=args.max_iter, seed=args.seed)
            entry = {"converged": res.converged, "iterations": res.iterations, "r_final": res.r_final}
            if res.features is not None:
                entry.update(c=res.features.c, weights=res.features.weights.tolist())
        else:
            if name == "naive":
                f = naive_interpret(api, x0, args.cls, r=args.r, seed=args.seed)
            elif name == "zoo":
                f = zoo_interpret(api, x0, args.cls, h=args.h)
            else:
                lam = args.lam if name == "lime_ridge" else 0.0
                f = lime_interpret(api, x0, args.cls, r=args.r, n_samples=args.n_samples, ridge=lam, seed=args.seed)
            entry = {"c": f.c, "weights": f.weights.tolist()}
        entry["queries"] = api.ledger.count - before
        out[name] = entry
    print(json.dumps(out, indent=2))


def cmd_experiment(args):
    doc = {}
    if args.config:
        try:
            with open(args.config) as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
    if args.model:
        doc["model"] = {"file": args.model}
    if args.endpoint:
        doc["model"] = {"endpoint": args.endpoint}
    if args.method:
        doc["methods"] = {m: doc.get("methods", {}).get(m, {}) if isinstance(doc.get("methods"), dict) else {}
                          for m in _methods(args.method)}
    for key in ("seed", "jobs", "out"):
        if getattr(args, key) is not None:
            doc[key] = getattr(args, key)
    cfg = ExperimentConfig.from_dict(doc)
    overrides = {"max_iter": args.max_iter, "h": args.h, "r": args.r, "lambda": args.lam}
    for name, params in cfg.methods.items():
        for key, val in overrides.items():
            if val is not None and key in params:
                params[key] = val
    result = run_experiment(cfg)
    print(json.dumps(result.summary, indent=2, sort_keys=True))


def cmd_render(args):
    with open(args.input) as fh:
        doc = json.load(fh)
    if isinstance(doc, dict):
        doc = doc[args.key] if args.key else doc
        doc = doc.get("weights", doc) if isinstance(doc, dict) else doc
    h, w = (int(v) for v in args.shape.split(","))
    svg = render_heatmap(np.asarray(doc, dtype=np.float64), (h, w))
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(svg)
    else:
        sys.stdout.write(svg)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="plminterp", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-model", help="write a synthetic model to a JSON file")
    g.add_argument("--kind", choices=["tree", "relu"], default="tree")
    g.add_argument("--d", type=int, default=10)
    g.add_argument("--C", type=int, default=3)
    g.add_argument("--depth", type=int, default=2)
    g.add_argument("--widths", help="relu layer widths, e.g. 10,16,8,3")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_model)

    s = sub.add_parser("serve", help="serve a model file over HTTP")
    s.add_argument("--model", required=True)
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--port", type=int, default=8000)
    s.set_defaults(func=cmd_serve)

    def method_flags(q, defaults: bool):
        q.add_argument("--model")
        q.add_argument("--endpoint")
        q.add_argument("--method", default="openapi" if defaults else None)
        q.add_argument("--seed", type=int, default=0 if defaults else None)
        q.add_argument("--max-iter", dest="max_iter", type=int, default=100 if defaults else None)
        q.add_argument("--h", type=float, default=1e-4 if defaults else None)
        q.add_argument("--r", type=float, default=1e-4 if defaults else None)
        q.add_argument("--lambda", dest="lam", type=float, default=1.0 if defaults else None)

    i = sub.add_parser("interpret", help="interpret one instance")
    method_flags(i, True)
    i.add_argument("--x", required=True, help="comma separated feature values")
    i.add_argument("--class", dest="cls", type=int, help="class to explain (default: predicted)")
    i.add_argument("--n-samples", dest="n_samples", type=int, default=1000)
    i.set_defaults(func=cmd_interpret)

    e = sub.add_parser("experiment", help="run an experiment config")
    method_flags(e, False)
    e.add_argument("--config")
    e.add_argument("--jobs", type=int)
    e.add_argument("--out")
    e.set_defaults(func=cmd_experiment)

    r = sub.add_parser("render", help="render decision features as an SVG heatmap")
    r.add_argument("--input", required=True, help="JSON list of weights, or interpret output")
    r.add_argument("--key", help="method key inside interpret output")
    r.add_argument("--shape", required=True, help="grid as H,W")
    r.add_argument("--out")
    r.set_defaults(func=cmd_render)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        args.func(args)
    except (ConfigError, FileNotFoundError, KeyError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as err:  # noqa: BLE001
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_RUNTIME
    return 0


if __name__ == "__main__":
    sys.exit(main())
