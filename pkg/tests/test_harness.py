import csv
import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from plminterp.api import serve_http
from plminterp.cli import main
from plminterp.harness import ConfigError, ExperimentConfig, run_experiment, synthetic_model
from plminterp.models import save_model
from plminterp.render import render_heatmap

SVG = "{http://www.w3.org/2000/svg}"


def config(**kw):
    doc = {"model": {"synthetic": {"kind": "tree", "d": 5, "C": 3, "depth": 2, "seed": 1}}, "methods": ["openapi"]}
    doc.update(kw)
    return ExperimentConfig.from_dict(doc)


class TestRunExperiment:
    def test_global_linear(self):
        cfg = config(
            model={"synthetic": {"kind": "tree", "d": 4, "C": 3, "depth": 0, "seed": 2}},
            methods=["openapi", "naive"],
            instances={"count": 50, "seed": 0},
            metrics=["l1"],
        )
        res = run_experiment(cfg)
        assert res.summary["instances"]["evaluated"] == 50
        for m in ("openapi", "naive"):
            rows = [r for r in res.records if r["method"] == m]
            assert len(rows) == 50
            assert all(r["l1"] <= 1e-6 for r in rows)
        assert all(r["converged"] for r in res.records if r["method"] == "openapi")

    def test_openapi_clouds_rd_wd_zero(self):
        cfg = config(
            model={"synthetic": {"kind": "tree", "d": 6, "C": 3, "depth": 2, "seed": 3}},
            instances={"count": 200, "seed": 1},
            metrics=["rd", "wd"],
        )
        s = run_experiment(cfg).summary["methods"]["openapi"]
        assert s["rd"]["mean"] == 0 and s["wd"]["mean"] == 0

    def test_endpoint_matches_in_process(self):
        spec = {"kind": "relu", "widths": [5, 10, 3], "seed": 4}
        model = synthetic_model(spec)
        local = run_experiment(config(model={"synthetic": spec}, methods=["openapi", "zoo"], metrics=[],
                                      instances={"count": 30, "seed": 2}))
        with serve_http(model) as srv:
            remote = run_experiment(config(model={"endpoint": srv.url}, methods=["openapi", "zoo"], metrics=[],
                                           instances={"count": 30, "seed": 2}))
        assert local.features.keys() == remote.features.keys()
        for key, f in local.features.items():
            assert np.abs(f.weights - remote.features[key].weights).sum() <= 1e-9

    def test_jobs_do_not_change_results(self):
        a = run_experiment(config(jobs=1, instances={"count": 20, "seed": 0}))
        b = run_experiment(config(jobs=4, instances={"count": 20, "seed": 0}))
        assert a.records == b.records

    def test_saturated_instances_skipped(self, tmp_path):
        path = tmp_path / "x.npy"
        np.save(path, np.array([[0.5, 0.5, 0.5], [1e4, 1e4, 1e4]]))
        cfg = config(model={"synthetic": {"kind": "tree", "d": 3, "C": 2, "depth": 0, "seed": 0}},
                     instances={"file": str(path)})
        res = run_experiment(cfg)
        assert [s["instance"] for s in res.skipped] == [1]
        assert "saturated" in res.skipped[0]["reason"]
        assert {r["instance"] for r in res.records} == {0}

    def test_cs_and_ablation(self):
        cfg = config(methods=["openapi", "saliency"], metrics=["cs", "ablation"],
                     instances={"count": 10, "seed": 3}, ablation_steps=3)
        res = run_experiment(cfg)
        assert all("cs" in r for r in res.records)
        abl = res.summary["ablation"]["openapi"]
        assert len(abl["mean_cpp"]) == 3 and len(abl["nlci"]) == 3


class TestOutputs:
    def test_byte_identical_rerun(self, tmp_path):
        bodies = []
        for run in ("a", "b"):
            cfg = config(methods=["openapi", "naive", "lime_linear"], metrics=["l1", "rd", "wd", "cs", "ablation"],
                         instances={"count": 15, "seed": 5}, ablation_steps=4, out=str(tmp_path / run))
            run_experiment(cfg)
            bodies.append([(tmp_path / run / f).read_bytes() for f in ("results.csv", "ablation.csv", "summary.json")])
        assert bodies[0] == bodies[1]
        assert b"\r\n" in bodies[0][0]
        meta = json.loads((tmp_path / "a" / "metadata.json").read_text())
        assert "finished" in meta and "timings_s" in meta

    def test_summary_recomputed_from_csv(self, tmp_path):
        cfg = config(methods=["openapi", "zoo"], metrics=["l1", "rd", "wd"],
                     instances={"count": 25, "seed": 6}, out=str(tmp_path))
        res = run_experiment(cfg)
        with open(tmp_path / "results.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        for m in ("openapi", "zoo"):
            for key in ("l1", "iterations", "queries"):
                vals = [float(r[key]) for r in rows if r["method"] == m and r[key] != ""]
                if not vals:
                    continue
                emitted = res.summary["methods"][m][key]
                assert emitted["n"] == len(vals)
                assert abs(emitted["mean"] - sum(vals) / len(vals)) <= 1e-12
                assert emitted["min"] == min(vals) and emitted["max"] == max(vals)

    def test_csv_floats_round_trip(self, tmp_path):
        run_experiment(config(metrics=["l1"], instances={"count": 5, "seed": 7}, out=str(tmp_path)))
        with open(tmp_path / "results.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert all(float(format(float(r["l1"]), ".17g")) == float(r["l1"]) for r in rows)


class TestConfig:
    def test_unknown_method(self):
        with pytest.raises(ConfigError):
            config(methods=["shap"])

    def test_unknown_metric(self):
        with pytest.raises(ConfigError):
            config(metrics=["auc"])

    @pytest.mark.parametrize("methods,metrics", [(["saliency"], []), (["openapi"], ["wd"])])
    def test_endpoint_forbids_oracle(self, methods, metrics):
        with pytest.raises(ConfigError):
            config(model={"endpoint": "http://127.0.0.1:1"}, methods=methods, metrics=metrics)

    def test_two_model_sources(self):
        with pytest.raises(ConfigError):
            config(model={"file": "a.json", "endpoint": "http://x"})

    def test_default_params_merged(self):
        cfg = config(methods={"lime_ridge": {"lambda": 0.5}})
        assert cfg.methods["lime_ridge"] == {"r": 1e-4, "n_samples": 1000, "lambda": 0.5}

    def test_instance_file_dimension(self, tmp_path):
        path = tmp_path / "x.csv"
        np.savetxt(path, np.ones((3, 4)), delimiter=",")
        with pytest.raises(ConfigError):
            run_experiment(config(instances={"file": str(path)}))


class TestRender:
    def test_all_zero_is_white(self):
        root = ET.fromstring(render_heatmap(np.zeros(6), (2, 3)))
        fills = [r.get("fill") for r in root.iter(SVG + "rect")]
        assert fills == ["#ffffff"] * 6

    def test_single_red_cell(self):
        w = np.zeros(4)
        w[0] = 1.0
        fills = [r.get("fill") for r in ET.fromstring(render_heatmap(w, (2, 2))).iter(SVG + "rect")]
        assert fills == ["#ff0000", "#ffffff", "#ffffff", "#ffffff"]

    def test_diverging_symmetric(self):
        fills = [r.get("fill") for r in ET.fromstring(render_heatmap([2.0, -2.0, -1.0], (1, 3))).iter(SVG + "rect")]
        assert fills[:2] == ["#ff0000", "#0000ff"] and fills[2] == "#8080ff"

    def test_weights_stored_exactly(self):
        w = np.array([0.1, -1 / 3])
        rects = ET.fromstring(render_heatmap(w, (1, 2))).iter(SVG + "rect")
        assert [float(r.get("data-weight")) for r in rects] == list(w)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            render_heatmap(np.zeros(5), (2, 3))

    def test_title_escaped(self):
        ET.fromstring(render_heatmap([1.0], (1, 1), title="a < b & c"))


class TestCli:
    def test_gen_interpret_render(self, tmp_path, capsys):
        model_path = tmp_path / "m.json"
        assert main(["gen-model", "--d", "4", "--C", "3", "--depth", "1", "--seed", "3", "--out", str(model_path)]) == 0
        capsys.readouterr()
        assert main(["interpret", "--model", str(model_path), "--x", "0.2,0.4,0.6,0.8",
                     "--method", "openapi,zoo,saliency"]) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["openapi"]["converged"] and len(out["zoo"]["weights"]) == 4
        assert out["openapi"]["queries"] == 1 + out["openapi"]["iterations"] * 5
        (tmp_path / "f.json").write_text(json.dumps(out))
        svg = tmp_path / "f.svg"
        assert main(["render", "--input", str(tmp_path / "f.json"), "--key", "openapi",
                     "--shape", "2,2", "--out", str(svg)]) == 0
        assert len(list(ET.parse(svg).getroot().iter(SVG + "rect"))) == 4

    def test_interpret_over_endpoint(self, capsys):
        model = synthetic_model({"kind": "tree", "d": 3, "C": 2, "depth": 1, "seed": 5})
        with serve_http(model) as srv:
            assert main(["interpret", "--endpoint", srv.url, "--x", "0.3 0.3 0.3"]) == 0
            assert json.loads(capsys.readouterr().out)["openapi"]["converged"]
            assert main(["interpret", "--endpoint", srv.url, "--x", "0.3,0.3,0.3", "--method", "saliency"]) == 1

    def test_experiment(self, tmp_path, capsys):
        model_path = tmp_path / "m.json"
        save_model(synthetic_model({"kind": "tree", "d": 3, "C": 2, "depth": 1, "seed": 1}), model_path)
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"model": {"file": "unused"}, "methods": {"naive": {"r": 0.5}},
                                   "instances": {"count": 10, "seed": 0}, "metrics": ["l1"]}))
        code = main(["experiment", "--config", str(cfg), "--model", str(model_path), "--r", "1e-4",
                     "--jobs", "2", "--out", str(tmp_path / "out")])
        assert code == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["methods"]["naive"]["l1"]["max"] <= 1e-6
        assert (tmp_path / "out" / "results.csv").exists()

    @pytest.mark.parametrize(
        "argv",
        [
            ["experiment", "--method", "shap", "--model", "m.json"],
            ["interpret", "--x", "0.1"],
            ["interpret", "--model", "/nonexistent.json", "--x", "0.1"],
            ["bogus"],
            ["experiment", "--config", "/nonexistent.json"],
        ],
    )
    def test_config_errors_exit_1(self, argv, capsys):
        assert main(argv) == 1

    def test_runtime_error_exit_2(self, capsys):
        assert main(["interpret", "--endpoint", "http://127.0.0.1:9", "--x", "0.1"]) == 2

    def test_wrong_dimension_is_config_error(self, tmp_path, capsys):
        model_path = tmp_path / "m.json"
        main(["gen-model", "--d", "3", "--out", str(model_path)])
        assert main(["interpret", "--model", str(model_path), "--x", "0.1,0.2"]) == 1
