import json

import pytest

from vadkit.cli import main
from vadkit.manifest import load_manifest, save_manifest


def run_cli(capsys, *args):
    capsys.readouterr()  # drain output from any earlier invocation
    code = main([str(a) for a in args])
    out = capsys.readouterr().out
    return code, json.loads(out) if out.strip() else None


@pytest.fixture(scope="module")
def staged(tmp_path_factory):
    """synth -> featurize -> select-channels -> fit, via the CLI."""
    root = tmp_path_factory.mktemp("cli")
    ds = root / "ds"
    fm = root / "fm"
    assert main(["synth", "--kind", "loop", "--checkpoint", "hook", "--out-dir",
                 str(ds), "--normal", "3", "--anomalous", "2", "--seed", "31",
                 "--raw-px", "288"]) == 0
    assert main(["featurize", "--manifest", str(ds / "manifest.json"),
                 "--out-dir", str(fm)]) == 0
    assert main(["select-channels", "--manifest", str(fm / "manifest.json"),
                 "--out", str(root / "mask.json")]) == 0
    assert main(["fit", "--manifest", str(fm / "manifest.json"), "--mask",
                 str(root / "mask.json"), "--out", str(root / "bank.nbnk")]) == 0
    return {"root": root, "ds": ds, "fm": fm,
            "bank": root / "bank.nbnk", "mask": root / "mask.json",
            "manifest": ds / "manifest.json"}


class TestExitCodes:
    def test_fit_single_normal_is_insufficient(self, staged, capsys, tmp_path):
        entries, base = load_manifest(staged["fm"] / "manifest.json")
        one = [e for e in entries if e.label == "normal"][:1]
        m = tmp_path / "one.json"
        save_manifest(one, m)
        # entry paths are relative to the original manifest dir; rebase
        rebased = [type(e)(str((base / e.path)), e.kind, e.label, e.checkpoint,
                           e.anchor_px, e.vessel_mask_path) for e in one]
        save_manifest(rebased, m)
        code, payload = run_cli(capsys, "fit", "--manifest", m, "--mask",
                                staged["mask"], "--out", tmp_path / "b.nbnk")
        assert code == 4
        assert payload["error"]["kind"] == "insufficient-data"

    def test_missing_bank_is_io_error(self, capsys, tmp_path):
        code, payload = run_cli(capsys, "score", "--bank", tmp_path / "nope.nbnk",
                                "--fmap", tmp_path / "x.fmap")
        assert code == 3
        assert payload["error"]["kind"] == "io-error"

    def test_check_without_tau_is_config_error(self, staged, capsys):
        entries, base = load_manifest(staged["manifest"])
        e = entries[0]
        code, payload = run_cli(capsys, "check", "--bank", staged["bank"],
                                "--image", base / e.path,
                                "--anchor", f"{e.anchor_px[0]},{e.anchor_px[1]}")
        assert code == 2
        assert payload["error"]["kind"] == "config-error"

    def test_usage_error_is_exit_2(self):
        with pytest.raises(SystemExit) as exc:
            main(["synth", "--kind", "galaxy", "--out-dir", "/tmp/x"])
        assert exc.value.code == 2


class TestCheck:
    def test_identical_sample_bank_self_scores_zero(self, staged, capsys, tmp_path):
        # the same training map listed twice: covariance collapses to eps*I
        entries, base = load_manifest(staged["fm"] / "manifest.json")
        normal = next(e for e in entries if e.label == "normal")
        twice = [type(normal)(str(base / normal.path), "fmap", "normal", "hook",
                              normal.anchor_px, None)] * 2
        m = tmp_path / "twice.json"
        save_manifest(twice, m)
        bank = tmp_path / "ident.nbnk"
        assert main(["fit", "--manifest", str(m), "--mask", str(staged["mask"]),
                     "--out", str(bank)]) == 0
        code, payload = run_cli(capsys, "check", "--bank", bank, "--fmap",
                                base / normal.path, "--tau", "0.5")
        assert code == 0
        assert payload["score"] == 0.0
        assert payload["anomalous"] is False

    def test_anomalous_image_exits_one(self, staged, capsys):
        entries, base = load_manifest(staged["manifest"])
        normals = [e for e in entries if e.label == "normal"]
        anom = next(e for e in entries if e.label == "anomalous")
        scores = {}
        for e in normals + [anom]:
            code, payload = run_cli(capsys, "score", "--bank", staged["bank"],
                                    "--image", base / e.path,
                                    "--anchor", f"{e.anchor_px[0]},{e.anchor_px[1]}")
            assert code == 0
            scores[e.path] = payload["score"]
        tau = max(scores[e.path] for e in normals)
        code, payload = run_cli(capsys, "check", "--bank", staged["bank"],
                                "--image", base / anom.path,
                                "--anchor", f"{anom.anchor_px[0]},{anom.anchor_px[1]}",
                                "--tau", str(tau))
        assert payload["anomalous"] is (payload["score"] > tau)
        assert code == (1 if payload["anomalous"] else 0)


class TestArtifactDeterminism:
    def test_select_and_fit_bytes_stable(self, staged, capsys, tmp_path):
        m = staged["fm"] / "manifest.json"
        a_mask, b_mask = tmp_path / "a.json", tmp_path / "b.json"
        run_cli(capsys, "select-channels", "--manifest", m, "--out", a_mask)
        run_cli(capsys, "select-channels", "--manifest", m, "--out", b_mask)
        assert a_mask.read_bytes() == b_mask.read_bytes()
        a_bank, b_bank = tmp_path / "a.nbnk", tmp_path / "b.nbnk"
        run_cli(capsys, "fit", "--manifest", m, "--mask", a_mask, "--out", a_bank)
        run_cli(capsys, "fit", "--manifest", m, "--mask", a_mask, "--out", b_bank)
        assert a_bank.read_bytes() == b_bank.read_bytes()


class TestMisc:
    def test_dump_geometry(self, capsys):
        code, payload = run_cli(capsys, "dump-geometry", "--checkpoint", "cortex")
        assert code == 0
        assert payload["n_windows"] == len(payload["geometry"]["windows"])

    def test_eval_report(self, staged, capsys, tmp_path):
        code, payload = run_cli(capsys, "eval", "--bank", staged["bank"],
                                "--manifest", staged["manifest"],
                                "--out", tmp_path / "report.json")
        assert code == 0
        assert 0.0 <= payload["metrics"]["aupr"] <= 1.0
        assert (tmp_path / "report.json").is_file()

    def test_score_with_heatmap(self, staged, capsys, tmp_path):
        entries, base = load_manifest(staged["manifest"])
        e = entries[0]
        code, payload = run_cli(capsys, "score", "--bank", staged["bank"],
                                "--image", base / e.path,
                                "--anchor", f"{e.anchor_px[0]},{e.anchor_px[1]}",
                                "--heatmap", tmp_path / "h.ppm", "--tau", "2.0")
        assert code == 0
        assert (tmp_path / "h.ppm").is_file()
