import json

import pytest

from slowssep import __version__
from slowssep.cli import RunConfig, main, parse_config, run


def test_defaults():
    cfg = parse_config()
    assert cfg.experiment == "hydro-mass"
    assert cfg.alpha == 0.2 and cfg.beta == 0.8
    assert cfg.horizon == 3.0 and cfg.replicas == 100 and cfg.seed == 0
    assert cfg.gamma == pytest.approx(0.5)


def test_config_file_with_flag_overrides(tmp_path):
    cfgfile = tmp_path / "run.toml"
    cfgfile.write_text('experiment = "stationary-mc"\n'
                       "N = 12\nalpha = 0.3\nreplicas = 10\n")
    cfg = parse_config(str(cfgfile), {"replicas": 25})
    assert cfg.experiment == "stationary-mc"
    assert cfg.N == 12 and cfg.alpha == 0.3
    assert cfg.replicas == 25          # flag wins over the file


def test_unknown_keys_rejected(tmp_path):
    cfgfile = tmp_path / "run.toml"
    cfgfile.write_text("gamma = 0.5\n")
    with pytest.raises(ValueError, match="unknown config keys"):
        parse_config(str(cfgfile))
    with pytest.raises(ValueError, match="unknown option keys"):
        parse_config(None, {"bogus": 1})


def test_reservoir_validation():
    with pytest.raises(ValueError, match="alpha"):
        RunConfig(alpha=1.2)
    with pytest.raises(ValueError, match="beta"):
        RunConfig(beta=0.0)
    with pytest.raises(ValueError):
        RunConfig(experiment="nope")
    with pytest.raises(ValueError):
        RunConfig(format="yaml")


def test_run_writes_csv_and_summary(tmp_path):
    cfg = RunConfig(experiment="stationary-exact", N=6,
                    output=str(tmp_path))
    assert run(cfg) == 0
    csv = (tmp_path / "stationary-exact.csv").read_text().splitlines()
    assert csv[0] == "experiment,N,t_or_m,estimate,ci_lo,ci_hi,reference,seed"
    assert len(csv) == 6               # header + N-1 site rows
    payload = json.loads((tmp_path / "stationary-exact.json").read_text())
    assert payload["library_version"] == __version__
    assert payload["config"]["N"] == 6
    assert payload["config"]["alpha"] == 0.2
    assert payload["summary"]["residual"] < 1e-10


def test_rerun_is_byte_identical(tmp_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    args = ["hydro-mass", "-N", "12", "--replicas", "8",
            "--horizon", "0.5", "--seed", "5"]
    assert main(args + ["-o", str(out1)]) == 0
    first = (out1 / "hydro-mass.json").read_bytes()
    assert main(args + ["-o", str(out2)]) == 0
    assert (out1 / "hydro-mass.csv").read_bytes() == \
        (out2 / "hydro-mass.csv").read_bytes()
    # rerunning into the same directory reproduces the summary exactly
    # (the config echo includes the output path, so only same-dir runs
    # can be compared byte for byte)
    assert main(args + ["-o", str(out1)]) == 0
    assert (out1 / "hydro-mass.json").read_bytes() == first


def test_seed_changes_output(tmp_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    main(["hydro-mass", "-N", "12", "--replicas", "8", "--horizon", "0.5",
          "--seed", "1", "-o", str(out1)])
    main(["hydro-mass", "-N", "12", "--replicas", "8", "--horizon", "0.5",
          "--seed", "2", "-o", str(out2)])
    assert (out1 / "hydro-mass.csv").read_bytes() != \
        (out2 / "hydro-mass.csv").read_bytes()


def test_json_format(tmp_path):
    assert main(["pde-decay", "--format", "json", "-o", str(tmp_path)]) == 0
    rows = json.loads((tmp_path / "pde-decay-rows.json").read_text())
    assert rows[0]["experiment"] == "pde-decay"
    assert abs(rows[0]["estimate"] - rows[0]["reference"]) \
        < 0.01 * rows[0]["reference"]


def test_bad_flag_value_exits_nonzero(capsys):
    assert main(["hydro-mass", "--alpha", "1.5"]) == 2
    assert "error:" in capsys.readouterr().err


def test_quasi_potential_subcommand(tmp_path):
    assert main(["quasi-potential", "--m", "0.7", "--alpha", "0.5",
                 "--beta", "0.5", "-o", str(tmp_path)]) == 0
    payload = json.loads((tmp_path / "quasi-potential.json").read_text())
    assert payload["summary"]["numeric"] == pytest.approx(
        payload["summary"]["entropy"], rel=1e-3)
