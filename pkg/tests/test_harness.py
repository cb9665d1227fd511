from pathlib import Path

import numpy as np
import pytest

from completion_detect import cli
from completion_detect.core import Dataset, FeatureSequence, save_dataset
from completion_detect.harness import (
    ExperimentConfig,
    evaluate,
    fit_fold,
    load_experiment_config,
    recompute_summary,
    run_loso,
)
from completion_detect.lstm import TrainConfig
from completion_detect.metrics import HEADLINE_SHIFT, read_shifts
from completion_detect.synth import SynthConfig, generate

FAST_LSTM = TrainConfig(epochs=2, hidden_size=8)


def quick_dataset(seed=0, actions=("pick",), **kw):
    cfg = SynthConfig.with_separation(
        3, 10.0, noise_std=10.0, subjects=3, sequences_per_subject=6,
        length_range=(10, 16), seed=seed, actions=actions, **kw,
    )
    return generate(cfg)


def config(tmp_path, **kw):
    return ExperimentConfig(tmp_path / "m.csv", tmp_path / "f", tmp_path / "out", **kw)


def test_pca_hmm_on_easy_data(tmp_path):
    result = evaluate(quick_dataset(), config(tmp_path))
    total = result.summary["rows"][-1]
    assert total["f1"] > 0.95
    assert len(result.shifts) == 18
    assert not result.skipped


def test_skip_when_post_unobservable(tmp_path):
    ds = quick_dataset(incomplete_fraction=1.0)
    result = evaluate(ds, config(tmp_path))
    assert len(result.skipped) == 3
    assert all("unobservable" in s["reason"] for s in result.skipped)
    assert result.summary["rows"][-1]["skipped_folds"] == 3


def test_complete_only_filter_skips_when_empty(tmp_path):
    ds = quick_dataset(incomplete_fraction=1.0)
    result = evaluate(ds, config(tmp_path, train_complete_only=True, model="lstm", lstm=FAST_LSTM))
    assert len(result.skipped) == 3


def test_test_fold_does_not_influence_model(tmp_path):
    ds = quick_dataset(seed=4)
    for model in ("pca_hmm", "pca_lstm"):
        cfg = config(tmp_path, model=model, lstm=FAST_LSTM)
        train = Dataset(tuple(s for s in ds if s.meta.subject_id != "s1"))
        rng = np.random.default_rng(0)
        noisy = tuple(
            s if s.meta.subject_id != "s1"
            else FeatureSequence(s.meta, rng.normal(size=s.frames.shape) * 100)
            for s in ds
        )
        train_noisy = Dataset(tuple(s for s in noisy if s.meta.subject_id != "s1"))
        a = fit_fold(train, cfg, seed=5)
        b = fit_fold(train_noisy, cfg, seed=5)
        assert np.array_equal(a.pca.components, b.pca.components)
        if model == "pca_hmm":
            assert np.array_equal(a.hmm.transition_log_prob, b.hmm.transition_log_prob)
            assert np.array_equal(a.hmm.emissions[0].covariance, b.hmm.emissions[0].covariance)
        else:
            assert all(np.array_equal(x, y) for x, y in zip(a.lstm.params(), b.lstm.params()))


@pytest.mark.parametrize("model", ["pca_hmm", "lstm"])
def test_per_action_independence(tmp_path, model):
    one = quick_dataset(seed=2, actions=("pick",))
    two = quick_dataset(seed=2, actions=("pick", "drink"))
    cfg = config(tmp_path, model=model, lstm=FAST_LSTM)
    a = evaluate(one, cfg)
    b = evaluate(two, cfg)
    assert a.shifts == [s for s in b.shifts if s.action == "pick"]
    assert a.confusion["pick"] == b.confusion["pick"]


def _write_run(tmp_path, model="pca_hmm", out="out", **extra):
    ds = quick_dataset(seed=1)
    save_dataset(ds, tmp_path / "manifest.csv", tmp_path / "features")
    lines = ["[experiment]", "manifest = manifest.csv", "features_dir = features",
             f"output_dir = {out}", f"model = {model}", "lstm_epochs = 2", "lstm_hidden_size = 8"]
    lines += [f"{k} = {v}" for k, v in extra.items()]
    path = tmp_path / "exp.ini"
    path.write_text("\n".join(lines) + "\n")
    return path


def test_config_parsing(tmp_path):
    path = _write_run(tmp_path, variance_threshold="0.8", train_complete_only="true")
    cfg = load_experiment_config(path)
    assert cfg.manifest == tmp_path / "manifest.csv"
    assert cfg.variance_threshold == 0.8 and cfg.train_complete_only
    assert cfg.lstm.epochs == 2 and cfg.lstm.lr_rest == 1e-4
    path.write_text(path.read_text() + "typo_key = 1\n")
    with pytest.raises(ValueError, match="typo_key"):
        load_experiment_config(path)


def test_run_writes_reports_and_headline_recomputes(tmp_path):
    cfg = load_experiment_config(_write_run(tmp_path, save_models="true"))
    result = run_loso(cfg)
    out = tmp_path / "out"
    for name in ("shifts.csv", "curve_complete.csv", "curve_incomplete.csv",
                 "frame_metrics.csv", "summary.json", "skipped.csv"):
        assert (out / name).is_file()
    assert (out / "models" / "pick" / "s1" / "hmm.csv").is_file()
    assert (out / "models" / "pick" / "s1" / "pca.csv").is_file()
    shifts = read_shifts(out / "shifts.csv")
    complete = [s.shift for s in shifts if s.is_complete]
    manual = sum(1 for v in complete if v <= HEADLINE_SHIFT) / len(complete)
    assert result.summary["rows"][-1]["c10_complete"] == manual
    assert recompute_summary(out) == result.summary


def test_cli_run_deterministic_and_report(tmp_path, capsys):
    path = _write_run(tmp_path, model="lstm")
    assert cli.main(["run", "--config", str(path), "--output-dir", str(tmp_path / "r1")]) == 0
    assert cli.main(["run", "--config", str(path), "--output-dir", str(tmp_path / "r2")]) == 0
    for name in ("shifts.csv", "frame_metrics.csv", "summary.json"):
        assert (tmp_path / "r1" / name).read_bytes() == (tmp_path / "r2" / name).read_bytes()
    capsys.readouterr()
    assert cli.main(["report", "--run-dir", str(tmp_path / "r1"), "--json", "--check"]) == 0
    assert capsys.readouterr().out == (tmp_path / "r1" / "summary.json").read_text()


def test_cli_synth_and_validate(tmp_path, capsys):
    ini = tmp_path / "synth.ini"
    ini.write_text("[synth]\nfeature_dim = 2\nseparation = 10\nsubjects = 2\n"
                   "sequences_per_subject = 3\n")
    assert cli.main(["synth", "--config", str(ini), "--out", str(tmp_path / "d")]) == 0
    assert cli.main(["validate", "--manifest", str(tmp_path / "d" / "manifest.csv"),
                     "--features-dir", str(tmp_path / "d" / "features")]) == 0
    assert "ok: 6 sequences" in capsys.readouterr().out


def test_cli_validate_corrupted_manifest(tmp_path, capsys):
    ds = quick_dataset()
    save_dataset(ds, tmp_path / "manifest.csv", tmp_path / "features")
    lines = (tmp_path / "manifest.csv").read_text().splitlines()
    lines[3] = lines[3].replace(",true,", ",maybe,").replace(",false,", ",maybe,")
    (tmp_path / "manifest.csv").write_text("\n".join(lines) + "\n")
    code = cli.main(["validate", "--manifest", str(tmp_path / "manifest.csv"),
                     "--features-dir", str(tmp_path / "features")])
    err = capsys.readouterr().err
    assert code == 2
    assert "manifest.csv:4" in err and len(err.strip().splitlines()) == 1


def test_cli_exit_codes(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["frobnicate"])
    assert exc.value.code == 1
    bad = tmp_path / "bad.ini"
    bad.write_text("[experiment]\nmodel = svm\nmanifest=a\nfeatures_dir=b\noutput_dir=c\n")
    assert cli.main(["run", "--config", str(bad)]) == 1
    missing = _write_run(tmp_path)
    (tmp_path / "manifest.csv").unlink()
    assert cli.main(["run", "--config", str(missing)]) == 2


def test_cli_training_failure_exit_code(tmp_path, monkeypatch):
    from completion_detect import harness

    path = _write_run(tmp_path)

    def boom(*a, **k):
        raise harness.TrainingFailure("HMM: covariance is not positive definite")

    monkeypatch.setattr(harness, "run_loso", boom)
    assert cli.main(["run", "--config", str(path)]) == 3


def test_model_serialisation_for_lstm(tmp_path):
    from completion_detect.lstm import load_lstm

    cfg = load_experiment_config(_write_run(tmp_path, model="pca_lstm", save_models="true"))
    run_loso(cfg)
    model, train_cfg = load_lstm(tmp_path / "out" / "models" / "pick" / "s2" / "lstm.csv")
    assert train_cfg.hidden_size == 8 and model.hidden_size == 8
    assert Path(str(tmp_path / "out" / "models" / "pick" / "s2" / "lstm.csv") + ".json").is_file()
