import hashlib
import json
import math

import numpy as np
import pytest

from entrod.harness import ConfigError, ExperimentSpec, run, run_estimate, run_predict, run_sweep
from entrod.harness.cli import main
from entrod.harness.config import build_spec, parse_sweep, read_config_file
from entrod.harness.io import format_value, read_sequence, render, write_binary_sequence
from entrod.npd import NpdConfig, entropy_rate_estimate
from entrod.prediction import PredictorConfig, mistake_rate
from entrod.quantization import CountingMeasure, FiniteScheme
from entrod.sources import IidCategorical, generate


def spec(**kw):
    return ExperimentSpec(**kw).validate()


def test_finite_estimate_has_seven_grid_records():
    recs = run_estimate(spec(source="iid(0.5,0.5)", scheme="finite(2)", n_max=1024))
    h = [r for r in recs if r.metric == "h_mu"]
    assert [r.n for r in h] == [16, 32, 64, 128, 256, 512, 1024]
    assert all(r.replicate == 0 and r.flag == "" for r in h)
    assert {r.metric for r in recs} == {"h_mu", "oracle_h"}


def test_records_rederive_from_the_library():
    s = spec(source="iid(0.3,0.7)", n_max=256, seed=5, replicates=2)
    recs = run_estimate(s)
    cfg = NpdConfig(FiniteScheme(2), CountingMeasure(2))
    for rep in (0, 1):
        x = generate(IidCategorical((0.3, 0.7)), 256, seed=5, replicate=rep).values
        tr = entropy_rate_estimate(x, cfg)
        got = [r.value for r in recs if r.replicate == rep and r.metric == "h_mu"]
        assert got == tr.estimate.tolist()


def test_predict_records_and_aggregates():
    s = spec(source="iid(0.3,0.7)", n_max=128, seed=3, replicates=3)
    recs = run_predict(s)
    metrics = {r.metric for r in recs}
    assert {"mistake_rate", "conditional_mistake_rate", "tv", "oracle_u"} <= metrics
    agg = [r for r in recs if r.replicate == -1]
    assert {r.metric for r in agg} == {"mistake_rate_mean", "mistake_rate_stderr"}
    assert [r.replicate for r in recs] == sorted(r.replicate for r in recs)
    x = generate(IidCategorical((0.3, 0.7)), 128, seed=3, replicate=1).values
    tr = mistake_rate(x, PredictorConfig(alphabet_size=2))
    assert [r.value for r in recs if r.replicate == 1 and r.metric == "mistake_rate"] == tr.mistake_rate.tolist()
    mean = [r.value for r in agg if r.metric == "mistake_rate_mean"]
    per = np.array([[r.value for r in recs if r.replicate == k and r.metric == "mistake_rate"] for k in range(3)])
    assert np.allclose(mean, per.mean(axis=0), rtol=0, atol=1e-15)
    assert next(r.value for r in recs if r.metric == "oracle_u") == pytest.approx(0.3)


def test_tv_only_for_iid_sources():
    recs = run_predict(spec(source="markov([0.9,0.1];[0.2,0.8])", n_max=64))
    assert "tv" not in {r.metric for r in recs}


def test_sweep_multiplies_records():
    base = spec(source="iid(0.3,0.7)", n_max=128, task="sweep", sweep="margin=0,2,4,8")
    single = run_estimate(spec(source="iid(0.3,0.7)", n_max=128))
    assert len(run_sweep(base)) == 4 * len(single)
    two = spec(source="gauss(0,1)", n_max=64, task="sweep", sweep="margin=0,4;level_cap=20,30")
    assert len({r.spec_hash for r in run(two)}) == 4


def test_sweep_in_parallel_matches_serial():
    s = spec(source="iid(0.3,0.7)", n_max=64, task="sweep", sweep="seed=1,2", replicates=2,
             sweep_task="predict")
    assert run(s) == run(ExperimentSpec(**{**s.__dict__, "jobs": 2}))


def test_empty_sweep_grid():
    with pytest.raises(ConfigError):
        parse_sweep("")
    with pytest.raises(ConfigError):
        parse_sweep("margin=")


def test_incompatible_pairs_name_the_axes():
    with pytest.raises(ConfigError, match="incremental.*real"):
        run_estimate(spec(source="gauss(0,1)", scheme="incremental"))
    with pytest.raises(ConfigError, match="dyadic.*symbolic"):
        run_estimate(spec(source="iid(0.5,0.5)", scheme="dyadic"))


@pytest.mark.parametrize("kw", [dict(replicates=0), dict(n_max=8), dict(units="hartleys"),
                                dict(source=None), dict(input="x", source="iid(1)")])
def test_spec_validation(kw):
    with pytest.raises(ConfigError):
        spec(**{"source": "iid(0.5,0.5)", **kw})


def test_config_file_and_overrides(tmp_path):
    f = tmp_path / "run.cfg"
    f.write_text("# demo\nsource = iid(0.3,0.7)\nn-max = 2^9  # wrong\n")
    with pytest.raises(ConfigError):
        build_spec(read_config_file(f), {})
    f.write_text("# demo\nsource = iid(0.3,0.7)\nn_max = 512\nwindow = exact\n")
    s = build_spec(read_config_file(f), {"n_max": "64", "seed": None})
    assert (s.n_max, s.seed, s.window) == (64, 0, None)
    with pytest.raises(ConfigError):
        build_spec({"colour": "red"}, {})


def test_cli_output_is_byte_identical(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["estimate", "--source", "iid(0.3,0.7)", "--n-max", "256", "--replicates", "2", "--seed", "9"]
    assert main(args + ["--output", str(a)]) == 0
    assert main(args + ["--output", str(b), "--jobs", "2"]) == 0
    assert hashlib.sha256(a.read_bytes()).digest() == hashlib.sha256(b.read_bytes()).digest()
    assert a.read_text().splitlines()[0] == "spec_hash,replicate,n,metric,value,flag"


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["estimate", "--source", "gauss(0,1)", "--scheme", "incremental"]) == 1
    assert main(["sweep", "--source", "iid(0.5,0.5)", "--sweep", ""]) == 1
    assert main(["estimate", "--bogus"]) == 1
    assert main(["estimate", "--source", "iid(0.5,0.5)", "--n-max", "ten"]) == 1
    assert "configuration error" in capsys.readouterr().err


def test_numerical_failure_exit_code(tmp_path):
    # the reference gives no mass to symbol 1, so the density is infinite
    p = tmp_path / "x.txt"
    p.write_text("\n".join(["0", "1"] * 20))
    assert main(["estimate", "--input", str(p), "--scheme", "finite(2)", "--ref", "points(1)"]) == 2


def test_jsonl_and_bits(tmp_path):
    out = tmp_path / "r.jsonl"
    assert main(["estimate", "--source", "iid(0.5,0.5)", "--n-max", "64", "--units", "bits",
                 "--format", "jsonl", "--output", str(out)]) == 0
    recs = [json.loads(line) for line in out.read_text().splitlines()]
    assert set(recs[0]) == {"spec_hash", "replicate", "n", "metric", "value", "flag"}
    assert next(r["value"] for r in recs if r["metric"] == "oracle_h") == pytest.approx(1.0)


def test_text_and_binary_input(tmp_path):
    sym = tmp_path / "s.txt"
    sym.write_text("# coin\n" + "\n".join(str(v) for v in generate(IidCategorical((0.5, 0.5)), 100).values))
    seq = read_sequence(sym)
    assert seq.kind == "symbolic" and seq.values.size == 100
    recs = run_estimate(spec(input=str(sym), n_max=64))
    assert max(r.n for r in recs) == 64 and "oracle_h" not in {r.metric for r in recs}

    z = np.random.default_rng(0).normal(size=200)
    txt, binf = tmp_path / "z.txt", tmp_path / "z.bin"
    txt.write_text("\n".join(repr(float(v)) for v in z))
    write_binary_sequence(z, binf)
    assert np.array_equal(read_sequence(txt).values, z)
    assert np.array_equal(read_sequence(binf).values, z)
    a = run_estimate(spec(input=str(txt), n_max=128))
    b = run_estimate(spec(input=str(binf), n_max=128))
    assert [r.value for r in a] == [r.value for r in b]
    assert "h_lambda" in {r.metric for r in a}

    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"ENTROD-F64-SEQ\0\0" + b"\0" * 5)
    with pytest.raises(ConfigError):
        read_sequence(bad)


def test_countable_source_reports_bounds_and_orders():
    recs = run_estimate(spec(source="geom(0.5)", n_max=128, seed=2))
    metrics = {r.metric for r in recs}
    assert {"h_mu", "h", "h_ppm_qr", "Q", "R", "levels_used", "oracle_h"} <= metrics
    assert all(r.flag == "lower_bound" for r in recs if r.metric == "h")


def test_value_formatting_round_trips():
    for v in (0.1, 1 / 3, 1e-300, -2.5):
        assert float(format_value(v)) == v
    assert format_value(math.inf) == "inf"
    out = render([], "csv").decode()
    assert out == "spec_hash,replicate,n,metric,value,flag\n"
