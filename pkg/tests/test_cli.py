import json

import numpy as np
import pandas as pd
import pytest

from streamreg.bench import run_bench
from streamreg.cli import FitRequest, main, run_fit, validate
from streamreg.errors import UnderIdentified, UsageError
from streamreg.ingest import ArraySource, BlockStreamConfig, FileSource, Schema
from streamreg.synth import SynthConfig, synth_arrays, write_synth

from conftest import rel_close


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def perfect(tmp_path):
    path = tmp_path / "perfect.csv"
    x1 = np.arange(1.0, 11.0)
    x2 = np.array([3, 1, 4, 1, 5, 9, 2, 6, 5, 3.0])
    pd.DataFrame({"y": 1 + 2 * x1 - x2, "x1": x1, "x2": x2}).to_csv(path, index=False)
    return str(path)


@pytest.fixture
def clustered_csv(tmp_path):
    rng = np.random.default_rng(4)
    n = 600
    state = rng.integers(0, 12, size=n)
    x1, x2 = rng.normal(size=n), rng.normal(size=n)
    z1 = x1 + rng.normal(size=n)
    z2 = x2 + rng.normal(size=n)
    y = 1 + x1 - 0.5 * x2 + rng.normal(size=12)[state] + rng.normal(size=n)
    w = rng.uniform(0.5, 2, size=n)
    yb = (rng.uniform(size=n) < 1 / (1 + np.exp(-(0.3 + x1)))).astype(int)
    period = np.tile(np.arange(6), n // 6)
    panel_id = np.repeat(np.arange(n // 6), 6)
    df = pd.DataFrame(
        dict(y=y, x1=x1, x2=x2, z1=z1, z2=z2, w=w, yb=yb, state=[f"s{v}" for v in state], period=period, unit=panel_id)
    )
    path = tmp_path / "clustered.csv"
    df.to_csv(path, index=False)
    return str(path)


def test_perfect_fit_json(capsys, perfect):
    code, out, _ = run(capsys, "fit", "--model", "ols", "--y", "y", "--x", "x1,x2", "--data", perfect)
    assert code == 0
    doc = json.loads(out)
    assert doc["r2"] == pytest.approx(1.0)
    assert doc["schema"] == 1 and doc["passes"] == 1 and doc["skipped_rows"] == 0
    assert np.allclose(doc["coefficients"], [1, 2, -1])
    for key in ("std_errors", "t_stats", "p_values", "adj_r2", "f_stat", "n", "dof", "seed"):
        assert key in doc


def test_bootstrap_json_is_byte_identical(capsys, clustered_csv):
    argv = ["fit", "--model", "ols", "--y", "y", "--x", "x1,x2", "--data", clustered_csv,
            "--vcv", "cluster-bootstrap", "--cluster", "state", "--reps", "500", "--seed", "7"]
    _, first, _ = run(capsys, *argv)
    _, second, _ = run(capsys, *argv)
    assert first == second
    doc = json.loads(first)
    assert doc["passes"] == 1 and doc["vcv_kind"] == "cluster-bootstrap" and doc["seed"] == 7


def test_underidentified_2sls_exits_before_reading(capsys, tmp_path):
    code, _, err = run(capsys, "fit", "--model", "2sls", "--y", "y", "--x", "x1,x2", "--instruments", "z1",
                       "--data", str(tmp_path / "does-not-exist.csv"))
    assert code == 2 and "instruments" in err
    with pytest.raises(UnderIdentified):
        validate(FitRequest(data="x.csv", y="y", x=["a", "b"], model="2sls", instruments=["z"]))


@pytest.mark.parametrize(
    "extra, passes",
    [([], 1), (["--vcv", "hc1"], 2), (["--vcv", "cluster", "--cluster", "state"], 2),
     (["--vcv", "cluster-bootstrap", "--cluster", "state", "--reps", "50"], 1)],
)
def test_pass_counts(capsys, clustered_csv, extra, passes):
    code, out, _ = run(capsys, "fit", "--y", "y", "--x", "x1,x2", "--data", clustered_csv, *extra)
    assert code == 0 and json.loads(out)["passes"] == passes


def test_models_run(capsys, clustered_csv):
    base = ["fit", "--y", "y", "--x", "x1,x2", "--data", clustered_csv]
    cases = [
        ["--model", "wls", "--weights", "w"],
        ["--model", "iv", "--instruments", "z1,z2"],
        ["--model", "2sls", "--instruments", "z1,z2,x1"],
        ["--model", "ridge", "--lambda", "2"],
        ["--model", "lasso", "--lambda1", "5"],
        ["--model", "elastic-net", "--lambda1", "5", "--lambda2", "1"],
        ["--fe", "unit"],
        ["--fe", "unit", "--fe2", "period"],
        ["--model", "ridge", "--lambda-grid", "0,1,10", "--folds", "4"],
        ["--model", "elastic-net", "--lambda-grid", "0,1,10", "--lambda2", "1", "--folds", "3"],
        ["--threads", "3"],
    ]
    for extra in cases:
        code, out, err = run(capsys, *base, *extra)
        assert code == 0, (extra, err)
        doc = json.loads(out)
        assert doc["passes"] == 1
    code, out, _ = run(capsys, "fit", "--y", "yb", "--x", "x1", "--data", clustered_csv, "--model", "logit")
    doc = json.loads(out)
    assert code == 0 and doc["converged"] and doc["passes"] == doc["iterations"] + 1 + doc["step_halvings"]


def test_usage_and_data_and_numeric_exit_codes(capsys, clustered_csv, tmp_path):
    base = ["fit", "--y", "y", "--data", clustered_csv]
    assert run(capsys, *base, "--x", "x1", "--vcv", "cluster")[0] == 2
    assert run(capsys, *base, "--x", "x1", "--model", "ridge")[0] == 2
    assert run(capsys, *base, "--x", "x1", "--model", "iv", "--instruments", "z1,z2")[0] == 2
    assert run(capsys, *base, "--x", "x1", "--model", "bogus")[0] == 2
    assert run(capsys, *base, "--x", "nope")[0] == 3
    assert run(capsys, "fit", "--y", "y", "--x", "x1", "--data", str(tmp_path / "missing.csv"))[0] == 3
    collinear = tmp_path / "col.csv"
    pd.DataFrame({"y": np.arange(10.0), "a": np.arange(10.0), "b": 2 * np.arange(10.0)}).to_csv(collinear, index=False)
    assert run(capsys, "fit", "--y", "y", "--x", "a,b", "--data", str(collinear))[0] == 4
    assert run(capsys, "fit", "--y", "y", "--x", "x1", "--data", clustered_csv, "--model", "logit")[0] == 3


def test_aggregate_round_trip(capsys, clustered_csv, tmp_path):
    agg = str(tmp_path / "agg.json")
    _, direct, _ = run(capsys, "fit", "--y", "y", "--x", "x1,x2", "--data", clustered_csv, "--save-aggregates", agg)
    _, again, _ = run(capsys, "fit", "--from-aggregates", agg)
    a, b = json.loads(direct), json.loads(again)
    assert a["coefficients"] == b["coefficients"] and b["passes"] == 0
    gagg = str(tmp_path / "gagg.json")
    _, fe, _ = run(capsys, "fit", "--y", "y", "--x", "x1,x2", "--data", clustered_csv, "--fe", "unit", "--save-aggregates", gagg)
    _, fe2, _ = run(capsys, "fit", "--from-aggregates", gagg, "--fe", "unit")
    assert json.loads(fe)["coefficients"] == json.loads(fe2)["coefficients"]
    assert run(capsys, "fit", "--from-aggregates", agg, "--vcv", "hc1")[0] == 2


def test_text_format_and_skipped_rows(capsys, tmp_path):
    path = tmp_path / "gaps.csv"
    path.write_text("y,x\n1,1\n2,\n3,3.5\n4,4\n5,4.5\n")
    code, out, _ = run(capsys, "fit", "--y", "y", "--x", "x", "--data", str(path), "--format", "text")
    assert code == 0 and "skipped rows: 1" in out and "_cons" in out
    assert run(capsys, "fit", "--y", "y", "--x", "x", "--data", str(path), "--strict")[0] == 3


def test_threads_env_fallback(capsys, clustered_csv, monkeypatch):
    monkeypatch.setenv("STREAMREG_THREADS", "2")
    code, out, _ = run(capsys, "fit", "--y", "y", "--x", "x1,x2", "--data", clustered_csv)
    _, ref, _ = run(capsys, "fit", "--y", "y", "--x", "x1,x2", "--data", clustered_csv, "--threads", "1")
    assert code == 0
    assert rel_close(json.loads(out)["coefficients"], json.loads(ref)["coefficients"], 1e-12)


def test_run_fit_api(clustered_csv):
    res = run_fit(FitRequest(data=clustered_csv, y="y", x=["x1", "x2"], vcv="hc1"))
    assert res.vcv_kind == "hc1" and res.passes == 2
    with pytest.raises(UsageError):
        run_fit(FitRequest(data=clustered_csv, y="y", x=["x1"], fe2="period"))


def test_synth_determinism_and_shape(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert run(capsys, "synth", "--n", "10", "--k", "2", "--seed", "1", "--out", str(a))[0] == 0
    assert run(capsys, "synth", "--n", "10", "--k", "2", "--seed", "1", "--out", str(b))[0] == 0
    assert a.read_bytes() == b.read_bytes()
    for k in (2, 5):
        write_synth(SynthConfig(20, k, seed=3), tmp_path / "c.csv")
        df = pd.read_csv(tmp_path / "c.csv")
        assert df.shape == (20, k)
    meta = json.loads((tmp_path / "c.csv.json").read_text())
    assert meta["k"] == 5 and len(meta["beta"]) == 5
    with pytest.raises(UsageError):
        SynthConfig(0, 2)


def test_synth_recovers_beta(tmp_path):
    path = tmp_path / "big.csv"
    meta = write_synth(SynthConfig(200_000, 4, seed=2), path)
    res = run_fit(FitRequest(data=str(path), y="y", x=["x1", "x2", "x3"]))
    z = (res.coefficients - np.array(meta["beta"])) / res.std_errors
    assert np.all(np.abs(z) < 3)
    assert res.sigma2 == pytest.approx(3.0, rel=0.02)


def test_bench_reports(tmp_path, capsys):
    y, X, _ = synth_arrays(10_000, 4, seed=1)
    report = run_bench(lambda b: ArraySource(y, X, block_size=b), [1, 100, 10_000], repetitions=2)
    assert [r.block_size for r in report.rows] == [1, 100, 10_000]
    base = report.rows[-1].coefficients[0]
    for row in report.rows:
        assert row.mean_seconds >= 0 and row.passes == 1
        for beta in row.coefficients:
            assert rel_close(beta, base, 1e-10)
    single = run_bench(lambda b: ArraySource(y, X, block_size=b), [10_000], repetitions=1)
    assert len(single.rows) == 1
    k = 4
    assert k * k * 8 <= single.rows[0].state_bytes <= 10 * k * k * 8
    path = tmp_path / "s.csv"
    write_synth(SynthConfig(500, 3), path)
    code, out, _ = run(capsys, "bench", "--data", str(path), "--y", "y", "--x", "x1,x2", "--block-sizes", "7,500",
                       "--repetitions", "2")
    lines = out.strip().splitlines()
    assert code == 0 and lines[0].startswith("block_size,mean_seconds") and len(lines) == 4
    assert lines[-1].startswith("# python=")
