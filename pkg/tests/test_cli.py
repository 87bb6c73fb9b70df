import json
from dataclasses import fields

import pytest

from wearload import cli, evaluate
from wearload.config import PipelineConfig


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli")
    rc = cli.main(["synthesize", "--out", str(out), "--n-sessions", "12", "--session-minutes", "8",
                   "--low-quality-sessions", "1", "--seed", "2", "-q"])
    assert rc == 0
    return out


def _m(corpus):
    return ["--manifest", str(corpus / "manifest.jsonl")]


def test_help_lists_every_config_field(capsys):
    with pytest.raises(SystemExit):
        cli.main(["evaluate", "--help"])
    text = capsys.readouterr().out
    for f in fields(PipelineConfig):
        assert "--" + f.name.replace("_", "-") in text
    assert "(default: 0.2)" in text and "(default: 120)" in text


def test_ingest_flags_low_quality(corpus, capsys):
    truth = [json.loads(x) for x in (corpus / "ground_truth.jsonl").read_text().splitlines()]
    (bad,) = [t["id"] for t in truth if t["low_quality"]]
    rc = cli.main(["ingest", *_m(corpus), "--report", str(corpus / "ingest.json"), "-q"])
    assert rc == 0
    out = capsys.readouterr().out
    assert f"{bad}\tExclude(LowQuality)" in out
    assert out.count("\tAdmit\t") == 11
    rep = json.loads((corpus / "ingest.json").read_text())
    assert rep["config_hash"] == PipelineConfig(jobs=1).hash and rep["seed"] == 0
    q = next(s for s in rep["sessions"] if s["id"] == bad)["quality"]["valid_fraction"]
    assert 0.3 < q < 0.5


def test_evaluate_byte_identical(corpus, tmp_path):
    cfg = tmp_path / "settings.json"
    cfg.write_text(json.dumps({"classifier": "gnb", "cv_folds": 5}))
    for name in ("a.json", "b.json"):
        assert cli.main(["evaluate", *_m(corpus), "--config", str(cfg), "--seed", "7",
                         "--report", str(tmp_path / name), "-q"]) == 0
    a = (tmp_path / "a.json").read_bytes()
    assert a == (tmp_path / "b.json").read_bytes()
    doc = json.loads(a)
    assert doc["seed"] == 7
    assert doc["config_hash"] == PipelineConfig(classifier="gnb", cv_folds=5, seed=7).hash
    assert doc["excluded"][0]["reason"] == "Exclude(LowQuality)"


def test_grid_two_by_two(corpus, tmp_path, capsys):
    rc = cli.main(["grid", *_m(corpus), "--blocks", "50,100", "--dropout", "0.0,0.2",
                   "--lstm-max-epochs", "2", "--cv-folds", "2", "--report",
                   str(tmp_path / "g.json"), "-q"])
    assert rc == 0
    doc = json.loads((tmp_path / "g.json").read_text())
    assert doc["blocks"] == [50, 100] and doc["dropouts"] == [0.0, 0.2]
    assert len(doc["mean_accuracy"]) == 2 and all(len(r) == 2 for r in doc["mean_accuracy"])
    assert "config_hash" in doc and "seed" in doc
    assert "50 LSTM Blocks" in capsys.readouterr().out


def test_features_and_train(corpus, tmp_path):
    assert cli.main(["features", *_m(corpus), "--out", str(tmp_path / "f.csv"),
                     "--dump-clean", str(tmp_path / "clean"), "-q"]) == 0
    lines = (tmp_path / "f.csv").read_text().splitlines()
    assert lines[0].startswith("# config_hash=")
    assert lines[1].startswith("meanRR,")
    assert len(list((tmp_path / "clean").glob("*_clean.json"))) == 12
    assert cli.main(["train", *_m(corpus), "--classifier", "rf", "--rf-trees", "5",
                     "--model", str(tmp_path / "m.json"), "-q"]) == 0
    model = json.loads((tmp_path / "m.json").read_text())
    assert model["classifier"] == "rf" and model["seed"] == 0 and model["config_hash"]
    evaluate.FittedPipeline.from_dict(model)


def test_validation_failure_exit_one(tmp_path, capsys):
    assert cli.main(["evaluate", "--manifest", str(tmp_path / "none.jsonl"), "-q"]) == 1
    err = capsys.readouterr().err
    assert "ingest.read_manifest" in err


def test_bad_config_exit_one(corpus, capsys):
    assert cli.main(["evaluate", *_m(corpus), "--cv-folds", "1", "-q"]) == 1
    assert "config.load_config" in capsys.readouterr().err


def test_malformed_session_exit_one(tmp_path, capsys):
    (tmp_path / "r.csv").write_text("t_ms,rr_ms\n0,abc\n")
    (tmp_path / "m.json").write_text('{"id": "x", "duration_ms": 1000, "tlx": null}')
    (tmp_path / "manifest.jsonl").write_text('{"id": "x", "rr": "r.csv", "accel": "a.csv", "meta": "m.json"}\n')
    assert cli.main(["ingest", "--manifest", str(tmp_path / "manifest.jsonl"), "-q"]) == 1
    assert "MalformedRow" in capsys.readouterr().err


def test_internal_error_exit_two(corpus, monkeypatch, capsys):
    def boom(*a, **k):
        raise RuntimeError("kaput")
    monkeypatch.setattr(evaluate, "run_cv", boom)
    assert cli.main(["evaluate", *_m(corpus), "--classifier", "gnb", "-q"]) == 2
    assert "evaluate.run_cv(gnb): RuntimeError: kaput" in capsys.readouterr().err
