import json

import pytest

from uqbench.cli import main
from uqbench.conversion import QUANTILE_LEVELS


@pytest.fixture
def run(capsys):
    def _run(*argv):
        code = main([str(a) for a in argv])
        out, err = capsys.readouterr()
        return code, out, err
    return _run


def _synth(run, path, *flags):
    code, _, err = run("synth", *flags, "-o", path)
    assert code == 0, err
    return path


def test_synth_is_byte_identical(run, tmp_path):
    a = _synth(run, tmp_path / "a.ndjson", "--kind", "class", "--n", 1000, "--seed", 7)
    b = _synth(run, tmp_path / "b.ndjson", "--kind", "class", "--n", 1000, "--seed", 7)
    assert a.read_bytes() == b.read_bytes()
    c = _synth(run, tmp_path / "c.ndjson", "--kind", "class", "--n", 1000, "--seed", 8)
    assert a.read_bytes() != c.read_bytes()


def test_seed_from_config_and_environment(run, tmp_path, monkeypatch):
    ref = _synth(run, tmp_path / "ref.ndjson", "--kind", "reg", "--n", 20, "--seed", 5).read_bytes()
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"seed": 5, "n": 20}))
    assert _synth(run, tmp_path / "cfg.ndjson", "--kind", "reg", "--config", cfg).read_bytes() == ref
    monkeypatch.setenv("UQBENCH_SEED", "5")
    assert _synth(run, tmp_path / "env.ndjson", "--kind", "reg", "--n", 20).read_bytes() == ref
    # an explicit flag wins over both
    assert _synth(run, tmp_path / "flag.ndjson", "--kind", "reg", "--n", 20, "--config", cfg,
                  "--seed", 6).read_bytes() != ref
    monkeypatch.setenv("UQBENCH_SEED", "five")
    assert run("synth", "--kind", "reg", "--n", 2)[0] == 2


def test_aggregate_zero_variance_is_seed_independent(run, tmp_path):
    m = _synth(run, tmp_path / "m.ndjson", "--kind", "members-class", "--n", 20, "--v-a", 0)
    outs = [run("aggregate", m, "--kind", "class", "--seed", s)[1] for s in (1, 2)]
    assert outs[0] == outs[1]
    rec = json.loads(outs[0].splitlines()[0])
    assert {"probs", "H_total", "H_ale", "H_epi"} <= set(rec)


def test_aggregate_regression_fields(run, tmp_path):
    m = _synth(run, tmp_path / "m.ndjson", "--kind", "members-reg", "--n", 5, "--members", 5)
    code, out, _ = run("aggregate", m, "--kind", "reg")
    recs = [json.loads(line) for line in out.splitlines()]
    assert code == 0 and len(recs) == 5 and [r["id"] for r in recs] == [f"m{i}" for i in range(5)]
    for r in recs:
        assert r["variance"] == pytest.approx(r["var_epistemic"] + r["var_aleatoric"])


def test_aggregate_reports_bad_line(run, tmp_path):
    m = _synth(run, tmp_path / "m.ndjson", "--kind", "members-reg", "--n", 10)
    lines = m.read_text().splitlines(keepends=True)
    lines[6] = "{not json\n"
    m.write_text("".join(lines))
    code, _, err = run("aggregate", m, "--kind", "reg")
    assert code == 2 and "line 7" in err
    code, _, err = run("aggregate", m, "--kind", "class")
    assert code == 2 and "line 1" in err


def test_recalibrate_ts_recovers_temperature(run, tmp_path):
    cal = _synth(run, tmp_path / "cal.ndjson", "--kind", "class", "--n", 20000, "--temperature", 2, "--seed", 1)
    test = _synth(run, tmp_path / "test.ndjson", "--kind", "class", "--n", 100, "--temperature", 2, "--seed", 2)
    out = tmp_path / "out.ndjson"
    code, _, err = run("recalibrate", test, "--method", "ts", "--cal", cal, "-o", out)
    assert code == 0, err
    model = json.loads((tmp_path / "out.ndjson.model.json").read_text())
    assert model["schema"] == "uqbench/1" and model["method"] == "ts"
    # the fitted T has a sampling sd near 2.7% at this size; allow about 4 sd
    assert model["params"]["T"] == pytest.approx(2.0, rel=0.11)
    assert len(out.read_text().splitlines()) == 100


def test_recalibrate_model_to_stderr_and_explicit_path(run, tmp_path):
    cal = _synth(run, tmp_path / "cal.ndjson", "--kind", "reg", "--n", 200, "--s-true", 1.5)
    code, out, err = run("recalibrate", cal, "--method", "vs", "--cal", cal)
    assert code == 0 and json.loads(err)["params"]["s"] > 1.2 and len(out.splitlines()) == 200
    dest = tmp_path / "vs.json"
    code, _, err = run("recalibrate", cal, "--method", "vs", "--cal", cal, "--model-out", dest)
    assert code == 0 and err == "" and json.loads(dest.read_text())["method"] == "vs"


def test_recalibrate_kind_mismatch_is_usage_error(run, tmp_path):
    reg = _synth(run, tmp_path / "r.ndjson", "--kind", "reg", "--n", 20)
    code, _, err = run("recalibrate", reg, "--method", "ts", "--cal", reg)
    assert code == 2 and "vs" in err
    code, _, err = run("recalibrate", reg, "--method", "ts")
    assert code == 2 and "--cal" in err


def test_cqr_with_one_calibration_record_is_insufficient(run, tmp_path):
    rec = {"id": "q0", "measurand": "y", "levels": list(QUANTILE_LEVELS),
           "values": [-2.0, -1.0, 0.0, 1.0, 2.0], "truth": 0.3}
    f = tmp_path / "q.ndjson"
    f.write_text(json.dumps(rec) + "\n")
    code, _, err = run("recalibrate", f, "--method", "cqr", "--cal", f, "--level", "2sigma")
    assert code == 1 and "calibration" in err


def test_venn_abers_records_carry_interval(run, tmp_path):
    cal = _synth(run, tmp_path / "cal.ndjson", "--kind", "class", "--n", 300, "--scale", 2, "--seed", 1)
    test = _synth(run, tmp_path / "test.ndjson", "--kind", "class", "--n", 30, "--scale", 2, "--seed", 2)
    code, out, _ = run("recalibrate", test, "--method", "venn-abers", "--cal", cal, "--model-out",
                       tmp_path / "m.json")
    assert code == 0
    for line in out.splitlines():
        r = json.loads(line)
        assert r["p0"] <= r["p"] <= r["p1"] and r["probs"][1] == pytest.approx(r["p"])


def test_evaluate_default_class_report(run, tmp_path):
    f = _synth(run, tmp_path / "c.ndjson", "--kind", "class", "--n", 500)
    code, out, _ = run("evaluate", f)
    rep = json.loads(out)
    assert code == 0 and rep["schema"] == "uqbench/1"
    assert set(rep["metrics"]) == {"ece", "ace", "smece", "uce", "vce", "nll", "auc"}
    assert len(rep["bin_stats"]["reliability"]) == 15


def test_evaluate_stratified_by_true_class(run, tmp_path):
    f = _synth(run, tmp_path / "c.ndjson", "--kind", "class", "--n", 500)
    code, out, _ = run("evaluate", f, "--stratify", "true-class", "--metrics", "ece,nll")
    rep = json.loads(out)
    assert code == 0 and set(rep["groups"]) == {"0", "1"}
    assert rep["group_mean"]["ece"] == pytest.approx(
        (rep["groups"]["0"]["metrics"]["ece"] + rep["groups"]["1"]["metrics"]["ece"]) / 2)


def test_evaluate_usage_errors(run, tmp_path):
    reg = _synth(run, tmp_path / "r.ndjson", "--kind", "reg", "--n", 50)
    code, _, err = run("evaluate", reg, "--metrics", "mae,mase")
    assert code == 2 and "baseline" in err
    code, out, _ = run("evaluate", reg, "--metrics", "mae,mase", "--baseline-mae", 4)
    rep = json.loads(out)
    assert code == 0 and rep["metrics"]["mase"] == pytest.approx(rep["metrics"]["mae"] / 4)
    code, _, err = run("evaluate", reg, "--metrics", "ece")
    assert code == 2 and "crps" in err
    code, _, err = run("evaluate", reg, "--bootstrap", 10)
    assert code == 2
    code, _, err = run("evaluate", tmp_path / "missing.ndjson")
    assert code == 2 and "cannot read" in err


def test_diagram_outputs(run, tmp_path):
    c = _synth(run, tmp_path / "c.ndjson", "--kind", "class", "--n", 300)
    r = _synth(run, tmp_path / "r.ndjson", "--kind", "reg", "--n", 300)
    rel = json.loads(run("diagram", c, "--type", "reliability")[1])
    assert rel["columns"] == ["index", "conf", "acc", "count"] and len(rel["rows"]) == 15
    assert sum(row[3] for row in rel["rows"]) == 300
    ence = json.loads(run("diagram", r, "--type", "ence", "--bins", 5)[1])
    assert ence["columns"] == ["index", "rmv", "rmse", "count"] and len(ence["rows"]) == 5
    biv = json.loads(run("diagram", r, "--type", "bivariate", "--bins", 4)[1])
    assert len(biv["err_edges"]) == 5 and len(biv["sigma_edges"]) == 5
    assert sum(map(sum, biv["counts"])) == 300
    csv = run("diagram", c, "--type", "uce", "--format", "csv", "--bins", 3)[1]
    assert csv.splitlines()[0].startswith("index,") and len(csv.splitlines()) == 4


def test_compare(run, tmp_path):
    a = _synth(run, tmp_path / "a.ndjson", "--kind", "class", "--n", 400)
    code, out, _ = run("compare", a, a, "--bootstrap", 200)
    rep = json.loads(out)
    assert code == 0 and rep["difference"] == 0.0 and rep["p_value"] >= 0.99
    b = tmp_path / "b.ndjson"
    b.write_text(a.read_text().replace('"c0"', '"zz"'))
    code, _, err = run("compare", a, b, "--bootstrap", 200)
    assert code == 2 and "ids" in err


def test_threads_do_not_change_outputs(run, tmp_path):
    c = _synth(run, tmp_path / "c.ndjson", "--kind", "class", "--n", 400, "--scale", 3)
    outs = []
    for t in (1, 3):
        code, out, _ = run("evaluate", c, "--bootstrap", 100, "--threads", t, "--seed", 4)
        assert code == 0
        outs.append(out)
    assert outs[0] == outs[1]
    assert run("evaluate", c, "--threads", 0)[0] == 2
