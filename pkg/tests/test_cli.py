import json
import os

import numpy as np
import pytest

import emastate as es
from emastate.cli import main


AR1_MODEL = {
    "n_states": 1, "n_obs": 1, "n_inputs": 0,
    "A": [[0.5]], "G": [], "H": [[1.0]],
    "Sigma": [[1.0]], "Theta": [[0.5]],
    "channels": [{"family": "gaussian", "state_index": 0}],
    "initial_mean": [0.0], "initial_cov": [[4.0 / 3.0]],
    "time_mode": "discrete", "random_walk_states": [],
}

SCENARIO = {
    "schedule": {"kind": "fixed", "horizon": 120.0, "interval": 1.0},
    "n_participants": 2,
}


def _write(path, obj):
    path.write_text(json.dumps(obj, indent=2))
    return str(path)


@pytest.fixture
def model_file(tmp_path):
    d = dict(AR1_MODEL)
    d["G"] = [[0.0]]
    d["n_inputs"] = 1
    return _write(tmp_path / "model.json", d)


@pytest.fixture
def scenario_file(tmp_path):
    return _write(tmp_path / "scenario.json", SCENARIO)


def test_simulate_writes_dataset_and_manifest(tmp_path, model_file, scenario_file):
    out = tmp_path / "data.csv"
    rc = main(["simulate", "--model", model_file, "--scenario", scenario_file,
               "--out", str(out), "--seed", "3"])
    assert rc == 0
    assert out.exists()
    data = es.read_dataset(out)
    assert data.n_participants == 2
    manifest = json.loads((tmp_path / "data.csv.manifest.json").read_text())
    assert manifest["command"] == "simulate"
    assert manifest["seed"] == 3
    assert len(manifest["inputs"]["model"]) == 1
    assert (tmp_path / "data.csv.summary.txt").exists()


def test_simulate_zero_horizon_fails_with_exit_2(tmp_path, model_file):
    bad = dict(SCENARIO)
    bad["schedule"] = {"kind": "fixed", "horizon": 0.0, "interval": 1.0}
    scenario = _write(tmp_path / "bad.json", bad)
    rc = main(["simulate", "--model", model_file, "--scenario", scenario,
               "--out", str(tmp_path / "x.csv"), "--seed", "1"])
    assert rc == 2


def test_simulate_same_seed_byte_identical(tmp_path, model_file, scenario_file, monkeypatch):
    for d in ("run1", "run2"):
        (tmp_path / d).mkdir()
    outs = []
    for d in ("run1", "run2"):
        monkeypatch.chdir(tmp_path / d)
        rc = main(["simulate", "--model", model_file, "--scenario", scenario_file,
                   "--out", "data.csv", "--seed", "11"])
        assert rc == 0
        outs.append((tmp_path / d / "data.csv").read_bytes())
    assert outs[0] == outs[1]


def test_fit_pooled_recovers_shared_dynamics(tmp_path, model_file, scenario_file):
    data_out = tmp_path / "d.csv"
    main(["simulate", "--model", model_file, "--scenario", scenario_file,
          "--out", str(data_out), "--seed", "5"])
    model = dict(AR1_MODEL); model["G"] = [[0.0]]; model["n_inputs"] = 1
    template = {
        "model": model,
        "parameters": {"A": [["free"]], "Sigma": [["free"]], "Theta": [["free"]]},
    }
    tpl = _write(tmp_path / "tpl.json", template)
    fit_out = tmp_path / "fit.json"
    rc = main(["fit", "--data", str(data_out), "--template", tpl,
               "--mode", "pooled", "--restarts", "2", "--out", str(fit_out),
               "--seed", "7"])
    assert rc == 0
    payload = json.loads(fit_out.read_text())
    assert payload["mode"] == "pooled"
    a_hat = payload["results"][0]["model"]["A"][0][0]
    assert abs(a_hat - 0.5) < 0.15
    assert payload["results"][0]["standard_errors"] is None


def test_fit_idiographic_one_participant_matches_pooled(tmp_path, model_file):
    scenario = dict(SCENARIO); scenario["n_participants"] = 1
    sc = _write(tmp_path / "s1.json", scenario)
    data_out = tmp_path / "d1.csv"
    main(["simulate", "--model", model_file, "--scenario", sc,
          "--out", str(data_out), "--seed", "9"])
    model = dict(AR1_MODEL); model["G"] = [[0.0]]; model["n_inputs"] = 1
    tpl = _write(tmp_path / "tpl.json",
                 {"model": model,
                  "parameters": {"A": [["free"]], "Sigma": [["free"]]}})
    outs = {}
    for mode in ("pooled", "idiographic"):
        out = tmp_path / f"{mode}.json"
        rc = main(["fit", "--data", str(data_out), "--template", tpl,
                   "--mode", mode, "--restarts", "2", "--out", str(out),
                   "--seed", "13"])
        assert rc == 0
        outs[mode] = json.loads(out.read_text())["results"][0]
    assert outs["pooled"]["log_likelihood"] == pytest.approx(
        outs["idiographic"]["log_likelihood"], abs=1e-6)


def test_fit_particle_on_gaussian_warns_but_runs(tmp_path, model_file, capsys):
    scenario = {"schedule": {"kind": "fixed", "horizon": 40.0, "interval": 1.0}}
    sc = _write(tmp_path / "s.json", scenario)
    data_out = tmp_path / "d.csv"
    main(["simulate", "--model", model_file, "--scenario", sc,
          "--out", str(data_out), "--seed", "15"])
    model = dict(AR1_MODEL); model["G"] = [[0.0]]; model["n_inputs"] = 1
    tpl = _write(tmp_path / "tpl.json",
                 {"model": model, "parameters": {"A": [["free"]]}})
    rc = main(["fit", "--data", str(data_out), "--template", tpl,
               "--likelihood", "particle", "--particles", "300",
               "--restarts", "1", "--max-iter", "15",
               "--out", str(tmp_path / "f.json"), "--seed", "17"])
    assert rc == 0
    assert "kalman" in capsys.readouterr().err


def test_filter_command_exports_table(tmp_path, model_file, scenario_file):
    data_out = tmp_path / "d.csv"
    main(["simulate", "--model", model_file, "--scenario", scenario_file,
          "--out", str(data_out), "--seed", "19"])
    out = tmp_path / "filtered.csv"
    rc = main(["filter", "--data", str(data_out), "--model", model_file,
               "--out", str(out)])
    assert rc == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "participant_id,t,mean.s1,var.s1,loglik,miss.y1"
    assert len(lines) == 1 + 2 * 120


def test_compare_emits_full_table(tmp_path, model_file, scenario_file):
    data_out = tmp_path / "d.csv"
    main(["simulate", "--model", model_file, "--scenario", scenario_file,
          "--out", str(data_out), "--seed", "21"])
    model = dict(AR1_MODEL); model["G"] = [[0.0]]; model["n_inputs"] = 1
    tpl_a = _write(tmp_path / "free_a.json",
                   {"model": model, "parameters": {"A": [["free"]]}})
    tpl_b = _write(tmp_path / "free_a_sigma.json",
                   {"model": model,
                    "parameters": {"A": [["free"]], "Sigma": [["free"]]}})
    out = tmp_path / "table.csv"
    rc = main(["compare", "--data", str(data_out),
               "--templates", tpl_a, tpl_b, "--restarts", "1",
               "--out", str(out), "--seed", "23"])
    assert rc == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "model_id,k,loglik,aic,bic,rank_aic,rank_bic,converged"
    assert len(lines) == 3
    assert lines[1].startswith("free_a,1,")
    assert lines[2].startswith("free_a_sigma,2,")


def test_compare_identical_templates_tie_break_listed_order(tmp_path, model_file,
                                                            scenario_file):
    data_out = tmp_path / "d.csv"
    main(["simulate", "--model", model_file, "--scenario", scenario_file,
          "--out", str(data_out), "--seed", "25"])
    model = dict(AR1_MODEL); model["G"] = [[0.0]]; model["n_inputs"] = 1
    tpl = {"model": model, "parameters": {"A": [["free"]]}}
    t1 = _write(tmp_path / "cand1.json", tpl)
    t2 = _write(tmp_path / "cand2.json", tpl)
    out = tmp_path / "table.csv"
    main(["compare", "--data", str(data_out), "--templates", t1, t2,
          "--restarts", "1", "--out", str(out), "--seed", "27"])
    rows = out.read_text().splitlines()[1:]
    assert rows[0].split(",")[0] == "cand1"
    assert rows[0].split(",")[5] == "1" and rows[1].split(",")[5] == "2"
    assert rows[0].split(",")[2] == rows[1].split(",")[2]    # identical loglik


def test_plotdata_figures(tmp_path):
    for fig in ("fig1a", "fig1b", "fig3a", "fig3b", "fig3c"):
        rc = main(["plotdata", "--figure", fig, "--out", str(tmp_path / fig),
                   "--seed", "1"])
        assert rc == 0
        assert (tmp_path / fig / f"{fig}.csv").exists()


def test_plotdata_fig1a_has_three_aligned_series(tmp_path):
    main(["plotdata", "--figure", "fig1a", "--out", str(tmp_path), "--seed", "2"])
    lines = (tmp_path / "fig1a.csv").read_text().splitlines()
    assert lines[0] == "t,full,thin5,thin10"
    assert len(lines) == 201


def test_plotdata_fig3b_segment_means_order(tmp_path):
    main(["plotdata", "--figure", "fig3b", "--out", str(tmp_path), "--seed", "3"])
    lines = (tmp_path / "fig3b.csv").read_text().splitlines()[1:]
    vals = np.array([float(l.split(",")[1]) for l in lines])
    early, mid, late = vals[:33].mean(), vals[33:66].mean(), vals[66:].mean()
    assert mid > early > late


def test_plotdata_unknown_figure(tmp_path):
    rc = main(["plotdata", "--figure", "fig9z", "--out", str(tmp_path), "--seed", "1"])
    assert rc == 2


def test_plotdata_deterministic(tmp_path):
    for d in ("a", "b"):
        rc = main(["plotdata", "--figure", "fig3c", "--out", str(tmp_path / d),
                   "--seed", "31"])
        assert rc == 0
    assert ((tmp_path / "a" / "fig3c.csv").read_bytes()
            == (tmp_path / "b" / "fig3c.csv").read_bytes())


def test_validate_ok_and_failing_exit_codes(tmp_path):
    good = _write(tmp_path / "good.json", AR1_MODEL)
    assert main(["validate", "--model", good]) == 0
    bad_model = dict(AR1_MODEL)
    bad_model["Sigma"] = [[-1.0]]
    bad = _write(tmp_path / "bad.json", bad_model)
    out = tmp_path / "report.json"
    rc = main(["validate", "--model", bad, "--out", str(out)])
    assert rc == 2
    report = json.loads(out.read_text())
    assert report["errors"][0][0] == "NON_PSD_SIGMA"


def test_missing_input_file_exit_4(tmp_path):
    rc = main(["validate", "--model", str(tmp_path / "nope.json")])
    assert rc == 4


def test_numerical_failure_exit_3(tmp_path):
    # rank-one state noise with no measurement error makes the innovation
    # covariance singular
    model = {
        "A": [[0.5, 0.0], [0.0, 0.5]],
        "Sigma": [[1.0, 1.0], [1.0, 1.0]],
        "H": [[1.0, 0.0], [0.0, 1.0]],
        "Theta": [[0.0, 0.0], [0.0, 0.0]],
        "channels": [{"family": "gaussian"}, {"family": "gaussian"}],
        "initial_mean": [0.0, 0.0],
        "initial_cov": [[1.0, 1.0], [1.0, 1.0]],
        "time_mode": "discrete",
    }
    mf = _write(tmp_path / "singular.json", model)
    data = tmp_path / "d.csv"
    data.write_text("participant_id,t,y.a,y.b\np1,0,0.1,0.2\np1,1,0.0,0.1\n")
    rc = main(["filter", "--data", str(data), "--model", mf,
               "--out", str(tmp_path / "f.csv")])
    assert rc == 3
