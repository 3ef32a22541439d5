import json

import numpy as np
import pytest

from betabelief.cli import main
FAST_TRAIN = ["--lr", "0.1", "--epochs", "4", "--batch", "32", "--dropout", "0",
              "--activation", "softplus", "--hidden", "8", "--val-frac", "0"]


def _synth(tmp_path, name="d.csv", n=200, noise="0.2", seed="7", extra=()):
    out = tmp_path / name
    code = main(["synth", "--n", str(n), "--overlap", "0.15", "--noise", noise,
                 "--seed", seed, "--out", str(out), *extra])
    assert code == 0
    return out


def _train(tmp_path, data, name="m.evdl", extra=()):
    out = tmp_path / name
    code = main(["train", "--data", str(data), *FAST_TRAIN, "--seed", "0",
                 "--out", str(out), *extra])
    assert code == 0
    return out


class TestSynth:
    def test_writes_rows_and_flags(self, tmp_path, capsys):
        out = _synth(tmp_path, n=1000)
        lines = out.read_text().splitlines()
        assert lines[0] == "f0,f1,label,noise_flag"
        assert len(lines) == 1001
        assert "wrote 1000 samples" in capsys.readouterr().out

    def test_byte_identical_rerun(self, tmp_path):
        a = _synth(tmp_path, "a.csv")
        b = _synth(tmp_path, "b.csv")
        assert a.read_bytes() == b.read_bytes()

    def test_bad_noise_rate_usage_error(self, tmp_path):
        code = main(["synth", "--n", "10", "--noise", "1.5", "--out", str(tmp_path / "x.csv")])
        assert code == 2
        assert not (tmp_path / "x.csv.manifest.json").exists()

    def test_manifest_written(self, tmp_path):
        out = _synth(tmp_path)
        manifest = json.loads((tmp_path / "d.csv.manifest.json").read_text())
        assert manifest["command"] == "synth"
        assert manifest["config"]["seed"] == 7
        assert str(out) in manifest["outputs"]
        assert manifest["duration_seconds"] >= 0


class TestTrain:
    def test_default_config_echo(self, tmp_path, capsys):
        data = _synth(tmp_path)
        out = tmp_path / "m.evdl"
        code = main(["train", "--data", str(data), "--epochs", "1", "--out", str(out)])
        assert code == 0
        echo = capsys.readouterr().out
        assert "lr=0.0001" in echo
        assert "batch=128" in echo
        assert "patience=3" in echo
        assert "lambda=1.0->0.1->0.001" in echo

    def test_missing_dataset_usage_error(self, tmp_path):
        code = main(["train", "--data", str(tmp_path / "absent.csv"), "--out", str(tmp_path / "m")])
        assert code == 2

    def test_model_and_manifest_written(self, tmp_path):
        data = _synth(tmp_path)
        model = _train(tmp_path, data)
        assert model.read_bytes()[:4] == b"EVDL"
        assert (tmp_path / "m.evdl.meta").exists()
        manifest = json.loads((tmp_path / "m.evdl.manifest.json").read_text())
        assert str(data) in manifest["input_hashes"]

    def test_byte_identical_rerun(self, tmp_path):
        data = _synth(tmp_path)
        a = _train(tmp_path, data, "a.evdl")
        b = _train(tmp_path, data, "b.evdl")
        assert a.read_bytes() == b.read_bytes()

    @pytest.mark.filterwarnings("ignore:invalid value encountered")
    def test_diverged_exit_code(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("f0,f1,label\nnan,0.0,0\n1.0,2.0,1\n")
        code = main(["train", "--data", str(bad), *FAST_TRAIN, "--out", str(tmp_path / "m.evdl")])
        assert code == 3

    def test_ensemble_directory(self, tmp_path):
        data = _synth(tmp_path)
        out = tmp_path / "ens"
        code = main(["train", "--data", str(data), *FAST_TRAIN, "--seed", "1",
                     "--ensemble", "2", "--subset", "0.8", "--out", str(out)])
        assert code == 0
        assert (out / "manifest.txt").exists()
        assert (out / "member_00.evdl").exists()
        assert (out / "member_01.evdl").exists()

    def test_config_file_defaults_and_flag_override(self, tmp_path, capsys):
        data = _synth(tmp_path)
        cfgfile = tmp_path / "run.cfg"
        cfgfile.write_text("lr=0.05\nepochs=2\n")
        out = tmp_path / "m.evdl"
        code = main(["train", "--data", str(data), "--config", str(cfgfile),
                     "--epochs", "1", "--val-frac", "0", "--out", str(out)])
        assert code == 0
        echo = capsys.readouterr().out
        assert "lr=0.05" in echo  # from config file
        assert "epochs=1" in echo  # flag wins


class TestEval:
    def test_predictions_and_summary(self, tmp_path, capsys):
        data = _synth(tmp_path)
        model = _train(tmp_path, data)
        test = _synth(tmp_path, "test.csv", noise="0", seed="9")
        out = tmp_path / "preds.csv"
        code = main(["eval", "--model", str(model), "--data", str(test), "--out", str(out)])
        assert code == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "id,p_pos,uncertainty,label,noise_flag"
        u = np.array([float(l.split(",")[2]) for l in lines[1:]])
        assert np.all((u > 0.0) & (u <= 1.0))
        summary = capsys.readouterr().out
        assert "auc " in summary

    def test_single_class_reports_undefined_auc(self, tmp_path, capsys):
        data = _synth(tmp_path)
        model = _train(tmp_path, data)
        single = tmp_path / "single.csv"
        single.write_text("f0,f1,label\n0.0,0.0,1\n1.0,1.0,1\n")
        code = main(["eval", "--model", str(model), "--data", str(single),
                     "--out", str(tmp_path / "p.csv")])
        assert code == 0
        assert "auc undefined" in capsys.readouterr().out

    def test_dimension_mismatch_runtime_error(self, tmp_path):
        data = _synth(tmp_path)
        model = _train(tmp_path, data)
        wide = _synth(tmp_path, "wide.csv", extra=("--dim", "3"))
        code = main(["eval", "--model", str(model), "--data", str(wide),
                     "--out", str(tmp_path / "p.csv")])
        assert code == 3

    def test_deterministic_rerun(self, tmp_path):
        data = _synth(tmp_path)
        model = _train(tmp_path, data)
        out1, out2 = tmp_path / "p1.csv", tmp_path / "p2.csv"
        for out in (out1, out2):
            assert main(["eval", "--model", str(model), "--data", str(data),
                         "--out", str(out)]) == 0
        assert out1.read_bytes() == out2.read_bytes()

    def test_threshold_search_option(self, tmp_path, capsys):
        data = _synth(tmp_path)
        model = _train(tmp_path, data)
        code = main(["eval", "--model", str(model), "--data", str(data),
                     "--threshold", "search", "--out", str(tmp_path / "p.csv")])
        assert code == 0
        assert "decision_threshold" in capsys.readouterr().out

    def test_bad_threshold_usage_error(self, tmp_path):
        data = _synth(tmp_path)
        model = _train(tmp_path, data)
        code = main(["eval", "--model", str(model), "--data", str(data),
                     "--threshold", "bogus", "--out", str(tmp_path / "p.csv")])
        assert code == 2

    def test_evaluates_ensemble_directory(self, tmp_path):
        data = _synth(tmp_path)
        out = tmp_path / "ens"
        main(["train", "--data", str(data), *FAST_TRAIN, "--ensemble", "2",
              "--subset", "0.8", "--out", str(out)])
        code = main(["eval", "--model", str(out), "--data", str(data),
                     "--out", str(tmp_path / "p.csv")])
        assert code == 0


class TestReject:
    def _preds(self, tmp_path):
        data = _synth(tmp_path)
        model = _train(tmp_path, data)
        preds = tmp_path / "preds.csv"
        main(["eval", "--model", str(model), "--data", str(data), "--out", str(preds)])
        return preds

    def test_default_grid_includes_reference_rates(self, tmp_path):
        preds = self._preds(tmp_path)
        out = tmp_path / "curve.csv"
        assert main(["reject", "--preds", str(preds), "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "rate,threshold,auc,f1_pos,f1_neg,micro_f1,retained,enrichment"
        rates = {float(l.split(",")[0]) for l in lines[1:]}
        assert {0.0, 0.1, 0.25, 0.5} <= rates

    def test_deterministic_rerun(self, tmp_path):
        preds = self._preds(tmp_path)
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        for out in (a, b):
            assert main(["reject", "--preds", str(preds), "--out", str(out)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_bad_rates_usage_error(self, tmp_path):
        preds = self._preds(tmp_path)
        code = main(["reject", "--preds", str(preds), "--rates", "0.5,0.1",
                     "--out", str(tmp_path / "c.csv")])
        assert code == 2
        code = main(["reject", "--preds", str(preds), "--rates", "abc",
                     "--out", str(tmp_path / "c.csv")])
        assert code == 2


class TestBootstrap:
    def test_default_fractions_and_rerun(self, tmp_path):
        data = _synth(tmp_path, n=150)
        test = _synth(tmp_path, "t.csv", n=100, noise="0", seed="11")
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        for out in (a, b):
            code = main(["bootstrap", "--data", str(data), "--test", str(test),
                         *FAST_TRAIN, "--seed", "0", "--out", str(out)])
            assert code == 0
        lines = a.read_text().splitlines()
        assert lines[0] == "fraction,removed,auc,f1_pos,f1_neg"
        fractions = [float(l.split(",")[0]) for l in lines[1:]]
        assert fractions == [0.0, 0.05, 0.1, 0.15]
        assert a.read_bytes() == b.read_bytes()


class TestGradcheck:
    def test_fresh_model_passes(self, capsys):
        assert main(["gradcheck", "--seed", "3"]) == 0
        assert "max_relative_gradient_error" in capsys.readouterr().out

    def test_report_file(self, tmp_path):
        out = tmp_path / "report.txt"
        assert main(["gradcheck", "--seed", "1", "--out", str(out)]) == 0
        assert "max_relative_gradient_error" in out.read_text()
        assert (tmp_path / "report.txt.manifest.json").exists()


class TestUsage:
    def test_unknown_subcommand(self):
        assert main(["frobnicate"]) == 2

    def test_missing_required_flag(self):
        assert main(["synth", "--n", "10"]) == 2
