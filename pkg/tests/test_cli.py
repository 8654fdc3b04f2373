import json

from solitonlab.cli import main


def _run(capsys, *argv):
    code = main(list(argv))
    return code, capsys.readouterr().out


def test_catalog_text_and_json(capsys):
    code, out = _run(capsys, "catalog")
    assert code == 0 and "sphere n=2 radius 2 (shrinker)" in out
    code, out = _run(capsys, "catalog", "--json", "--n", "3")
    assert code == 0
    names = json.loads(out)
    assert isinstance(names, list) and names


def test_catalog_rejects_n1(capsys):
    assert main(["catalog", "--n", "1"]) == 2


def test_verify_exit_codes(tmp_path, capsys):
    assert main(["verify", "--surface", "sphere", "--out", str(tmp_path)]) == 0
    for name in ("verify-shrinker-residual.json", "verify-eigen-identities.json", "verify-simons-identity.json",
                 "manifest-verify.json"):
        assert (tmp_path / name).exists()
    manifest = json.loads((tmp_path / "manifest-verify.json").read_text())
    assert manifest["schema"] == "manifest.v1" and manifest["pass"] is True
    assert main(["verify", "--surface", "sphere", "--n", "1", "--out", str(tmp_path)]) == 2
    assert main(["verify", "--surface", "bowl", "--out", str(tmp_path)]) == 2


def test_spectrum_plane(tmp_path, capsys):
    code = main(["spectrum", "--surface", "plane", "--R", "6", "--delta", "0.5", "--out", str(tmp_path)])
    assert code == 0
    doc = json.loads((tmp_path / "spectrum.json").read_text())
    assert doc["verdict"] is True


def test_prop31_cylinder_fails(tmp_path, capsys):
    code = main(["estimates", "prop31", "--surface", "cylinder", "--R", "10", "--lambda0", "1.5",
                 "--out", str(tmp_path)])
    assert code == 1
    doc = json.loads((tmp_path / "prop31.json").read_text())
    assert doc["hypothesis_status"] == "not 1/2-stable" and doc["pass"] is False


def test_translator_bowl_outputs(tmp_path, capsys):
    assert main(["translator", "bowl", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "bowl-profile.csv").read_text().startswith("r,")
    assert json.loads((tmp_path / "bowl-report.json").read_text())["pass"] is True


def test_env_out_dir(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("SOLITONLAB_OUT", str(tmp_path / "env"))
    assert main(["entropy", "--surface", "plane", "--rtrunc", "6", "--lambda0", "1"]) == 0
    assert (tmp_path / "env" / "entropy.json").exists()


def test_config_precedence(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"R": 4.0, "delta": 0.5, "surface": "plane"}))
    assert main(["spectrum", "--config", str(cfg), "--R", "5", "--out", str(tmp_path)]) == 0
    manifest = json.loads((tmp_path / "manifest-spectrum.json").read_text())
    assert manifest["config"]["R"] == 5.0 and manifest["config"]["surface"] == "plane"
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"nope": 1}))
    assert main(["spectrum", "--config", str(bad), "--out", str(tmp_path)]) == 2


def test_reports_byte_identical(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["estimates", "ssy", "--surface", "plane", "--R", "6", "--cutoffs", "3", "--seed", "7",
                     "--out", str(d)]) == 0
    names = sorted(p.name for p in a.glob("ssy-*.json"))
    assert len(names) == 3
    for name in names:
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_convert_roundtrip(tmp_path, capsys):
    assert main(["estimates", "prop31", "--surface", "plane", "--R", "6", "--lambda0", "1",
                 "--out", str(tmp_path)]) == 0
    capsys.readouterr()
    summary = tmp_path / "summary.csv"
    assert main(["convert", str(tmp_path / "prop31.json"), "-o", str(summary)]) == 0
    lines = summary.read_text().splitlines()
    assert lines[0] == "name,lhs,rhs,pass,hypothesis_status,params" and len(lines) == 2
    assert main(["convert", str(summary)]) == 0
    rows = json.loads(capsys.readouterr().out)
    assert rows[0]["pass"] == "True"
