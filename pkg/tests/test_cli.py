import shutil
import subprocess

import pytest

from blinddelegate import cli
from blinddelegate.errors import ConfigError


@pytest.fixture(autouse=True)
def _clean_env(monkeypatch):
    monkeypatch.delenv(cli.ENV_SEED, raising=False)


def _circuit(tmp_path, text="H 0\nCNOT 0 1\n"):
    path = tmp_path / "circuit.txt"
    path.write_text(text)
    return str(path)


def test_parse_config_run_flags(tmp_path):
    config = cli.parse_config(
        ["run", "--protocol", "2", "--circuit", "c.txt", "--loss", "0.25",
         "--seed", "9", "--adversary", "loss-device", "--countermeasure",
         "--outdir", str(tmp_path)]
    )
    assert config.command == "run"
    assert config.protocol == "2" and config.circuit == "c.txt"
    assert config.loss == 0.25 and config.seed == 9
    assert config.adversary == "loss-device" and config.countermeasure
    assert config.outdir == str(tmp_path)


def test_env_seed_overrides_flag(monkeypatch):
    monkeypatch.setenv(cli.ENV_SEED, "77")
    config = cli.parse_config(["verify", "--seed", "5"])
    assert config.seed == 77
    monkeypatch.setenv(cli.ENV_SEED, "not-a-number")
    with pytest.raises(ConfigError):
        cli.parse_config(["verify"])


def test_loss_out_of_range_is_config_error(tmp_path):
    code = cli.main(
        ["run", "--protocol", "2", "--circuit", _circuit(tmp_path),
         "--loss", "1.5", "--outdir", str(tmp_path)]
    )
    assert code == 2


def test_unknown_checks_rejected(tmp_path):
    assert cli.main(["verify", "--checks", "bogus", "--outdir", str(tmp_path)]) == 2


def test_missing_circuit_file(tmp_path):
    code = cli.main(
        ["run", "--protocol", "2", "--circuit", str(tmp_path / "nope.txt"),
         "--outdir", str(tmp_path)]
    )
    assert code == 2


def test_total_loss_exhausts_retries(tmp_path):
    code = cli.main(
        ["run", "--protocol", "2", "--circuit", _circuit(tmp_path),
         "--loss", "1.0", "--outdir", str(tmp_path)]
    )
    assert code == 3


def test_run_protocol2_writes_outputs(tmp_path, capsys):
    code = cli.main(
        ["run", "--protocol", "2", "--circuit", _circuit(tmp_path),
         "--loss", "0.3", "--seed", "4", "--outdir", str(tmp_path)]
    )
    assert code == 0
    report = (tmp_path / "report.txt").read_text()
    assert "output_match=true" in report
    assert report.startswith("run protocol=2 seed=4 loss=0.3")
    transcript = (tmp_path / "transcript.txt").read_text()
    assert transcript.splitlines()[0] == "run protocol=2 seed=4 loss=0.3"
    assert "k=DONE" in transcript
    assert capsys.readouterr().out == report


def test_run_chain_protocols(tmp_path):
    circuit = _circuit(tmp_path, "H 0\nS 0\n")
    for protocol in ("1", "tp"):
        outdir = tmp_path / protocol
        code = cli.main(
            ["run", "--protocol", protocol, "--circuit", circuit,
             "--loss", "0.2" if protocol == "tp" else "0.0",
             "--seed", "3", "--outdir", str(outdir)]
        )
        assert code == 0
        report = (outdir / "report.txt").read_text()
        assert "outcome=" in report and "frames=w0:" in report


def test_same_seed_runs_are_byte_identical(tmp_path):
    circuit = _circuit(tmp_path)
    argv = ["run", "--protocol", "2", "--circuit", circuit, "--loss", "0.4",
            "--seed", "11"]
    for sub in ("a", "b"):
        assert cli.main(argv + ["--outdir", str(tmp_path / sub)]) == 0
    for name in ("transcript.txt", "report.txt"):
        assert (tmp_path / "a" / name).read_bytes() == (
            tmp_path / "b" / name
        ).read_bytes()


def test_env_seed_changes_artifacts(tmp_path, monkeypatch):
    circuit = _circuit(tmp_path)
    argv = ["run", "--protocol", "2", "--circuit", circuit, "--seed", "11"]
    assert cli.main(argv + ["--outdir", str(tmp_path / "a")]) == 0
    monkeypatch.setenv(cli.ENV_SEED, "12")
    assert cli.main(argv + ["--outdir", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "transcript.txt").read_text()
    b = (tmp_path / "b" / "transcript.txt").read_text()
    assert a.splitlines()[0] != b.splitlines()[0]


def test_verify_all_checks_pass(tmp_path):
    assert cli.main(["verify", "--outdir", str(tmp_path)]) == 0
    report = (tmp_path / "report.txt").read_text()
    assert "pass=false" not in report
    for kind in ("check=identities", "check=unitcell", "check=stabilizers",
                 "check=p1-marginal", "check=p2-m-dist"):
        assert kind in report


def test_verify_check_subset(tmp_path):
    assert cli.main(
        ["verify", "--checks", "identities,stabilizers", "--outdir", str(tmp_path)]
    ) == 0
    report = (tmp_path / "report.txt").read_text()
    assert "check=identities" in report
    assert "check=unitcell" not in report


def test_calibrate_output(tmp_path):
    assert cli.main(["calibrate", "--outdir", str(tmp_path)]) == 0
    lines = (tmp_path / "calibration.txt").read_text().splitlines()
    assert lines[0] == "calibration bridge=0,2"
    assert "op=CZCNOT wire0=2,2,0 wire1=2,2,2 bridge=0,2" in lines
    assert "op=STHxI wire0=7,0,2 adapt3=2,0 wire1=2,2,2" in lines


def test_attack_report(tmp_path):
    assert cli.main(
        ["attack", "--trials", "150", "--seed", "1", "--outdir", str(tmp_path)]
    ) == 0
    lines = (tmp_path / "attack.txt").read_text().splitlines()
    digit_lines = [ln for ln in lines if ln.startswith("attack digit=")]
    assert len(digit_lines) == 8
    assert all("success=true" in ln for ln in digit_lines)
    mi = {}
    for ln in lines:
        if ln.startswith("mi countermeasure="):
            fields = dict(f.split("=", 1) for f in ln[3:].split())
            mi[fields["countermeasure"]] = float(fields["bits"])
    assert mi["off"] > 2.0
    assert mi["on"] < 0.3


def test_console_script_entry_point(tmp_path):
    exe = shutil.which("blinddelegate")
    assert exe, "console script must be installed"
    proc = subprocess.run(
        [exe, "calibrate", "--outdir", str(tmp_path)],
        capture_output=True, text=True, timeout=120,
    )
    assert proc.returncode == 0
    assert proc.stdout.startswith("calibration bridge=")
