import json

import numpy as np
import pytest

from fracspde import cli
from fracspde.checks import fit_exponent
from fracspde.config import ExperimentConfig
from fracspde.errors import ConfigError, GateViolation, ParameterError

pytestmark = pytest.mark.filterwarnings("ignore::fracspde.errors.AliasingWarning")

SMALL_SOLVE = """
seed = 3
phi = { kind = "power", s = 0.5 }

[grid]
n = 32
L = 6.0

[solver]
n_t = 8
n_paths = 3
varthetas = [0.0, 20.0]
"""


def write(tmp_path, text, name="cfg.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


# --- fit_exponent ------------------------------------------------------------


def test_fit_exact_power_law():
    x = np.geomspace(1e-2, 1e2, 9)
    fit = fit_exponent(x, 3 * x ** 2, 2.0)
    assert abs(fit.slope - 2.0) < 1e-12
    assert fit.r2 == pytest.approx(1.0)


def test_fit_noisy_power_law():
    rng = np.random.default_rng(0)
    x = np.geomspace(1e-2, 1e2, 40)
    y = x ** -0.7 * (1 + 0.01 * rng.standard_normal(x.size))
    assert abs(fit_exponent(x, y, -0.7).slope + 0.7) < 0.05


def test_fit_deviation_arithmetic():
    x = np.geomspace(1, 1e3, 5)
    fit = fit_exponent(x, x ** -0.52, -0.5)
    assert fit.deviation == pytest.approx(0.04, abs=1e-12)
    assert fit_exponent(x, x ** 0.02, 0.0).deviation == pytest.approx(0.2, abs=1e-12)


def test_fit_span_and_count():
    with pytest.raises(ParameterError):
        fit_exponent(np.geomspace(1, 50, 6), np.ones(6), 0.0)
    with pytest.raises(ParameterError):
        fit_exponent(np.array([1.0, 10.0, 1000.0]), np.ones(3), 0.0)


# --- config ------------------------------------------------------------------


def test_config_missing_phi():
    with pytest.raises(ConfigError) as err:
        ExperimentConfig.from_toml("seed = 1\n")
    assert err.value.field == "phi"


def test_config_unknown_key_reports_line():
    text = 'phi = { kind = "power", s = 0.5 }\n[grid]\nn = 64\nwidth = 3\n'
    with pytest.raises(ConfigError) as err:
        ExperimentConfig.from_toml(text)
    assert err.value.field == "grid.width"
    assert "line 4" in str(err.value)


def test_config_type_error():
    with pytest.raises(ConfigError) as err:
        ExperimentConfig.from_toml('phi = { kind = "power", s = 0.5 }\n[grid]\nn = "big"\n')
    assert err.value.field == "grid.n"


def test_config_bad_phi():
    with pytest.raises(ConfigError) as err:
        ExperimentConfig.from_toml('phi = { kind = "power", s = 1.5 }\n')
    assert err.value.field == "phi"


def test_config_gate_violation():
    text = 'phi = { kind = "power", s = 0.5 }\n[exponents]\nsigma2 = 0.76\n'
    with pytest.raises(GateViolation) as err:
        ExperimentConfig.from_toml(text)
    assert "0.48" in str(err.value)


def test_config_syntax_error():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_toml("phi = {kind = \n")


def test_hash_ignores_seed_and_out():
    a = ExperimentConfig.from_dict({}, {"seed": 1, "out": "a"})
    b = ExperimentConfig.from_dict({}, {"seed": 2, "out": "b"})
    c = ExperimentConfig.from_dict({"grid": {"n": 128}})
    assert a.hash() == b.hash() != c.hash()


def test_noise_kinds():
    for block in ({"kind": "none"}, {"kind": "point", "rate": 2.0}, {"kind": "tempered-power", "eps_jump": 0.1}):
        ExperimentConfig.from_dict({"noise": block}).noise_spec()
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"noise": {"kind": "cauchy"}})


def test_parse_helpers():
    assert cli.parse_phi("power:s=0.5") == {"kind": "power", "s": 0.5}
    assert cli.parse_phi('{ kind = "logpower", s = 1.0, c = 2.0 }')["c"] == 2.0
    assert cli.parse_sweep("geom:1:100:3") == pytest.approx([1.0, 10.0, 100.0])
    assert cli.parse_sweep("0.5,1") == [0.5, 1.0]
    with pytest.raises(ConfigError):
        cli.parse_sweep("geom:1:x:3")


# --- subcommands -------------------------------------------------------------


def test_ml_check_default(tmp_path):
    assert cli.main(["ml-check", "--out", str(tmp_path)]) == 0
    data = json.loads((tmp_path / "ml-check.json").read_text())
    assert data["passed"] and data["seed"] == 0 and len(data["config_hash"]) == 16
    header = (tmp_path / "ml-check.csv").read_text().splitlines()[0]
    assert "error" in header


def test_fit_exponents_l1_mass(tmp_path):
    code = cli.main(["fit-exponents", "--target", "l1-mass", "--alpha", "0.5", "--sigma", "1", "--out", str(tmp_path)])
    assert code == 0
    data = json.loads((tmp_path / "fit-exponents-l1-mass.json").read_text())
    assert data["metrics"]["declared"] == pytest.approx(-0.5)
    assert data["metrics"]["predicted"] == pytest.approx(-0.5, abs=1e-6)


def test_kernel_check_flags_enter_hash(tmp_path):
    cli.main(["kernel-check", "--out", str(tmp_path / "a")])
    cli.main(["kernel-check", "--alpha", "0.3", "--phi", "power:s=0.75", "--t-sweep", "geom:0.01:1:5",
              "--out", str(tmp_path / "b")])
    a = json.loads((tmp_path / "a" / "kernel-check.json").read_text())
    b = json.loads((tmp_path / "b" / "kernel-check.json").read_text())
    assert a["passed"] and b["passed"]
    assert a["config_hash"] != b["config_hash"]
    assert b["metrics"]["fits"][0]["declared"] == pytest.approx(-0.7)


def test_missing_phi_exit_code(tmp_path, capsys):
    code = cli.main(["ml-check", "--config", write(tmp_path, "seed = 1\n")])
    assert code == 2
    assert "phi" in capsys.readouterr().err


def test_gate_exit_code(tmp_path, capsys):
    cfg = write(tmp_path, 'phi = { kind = "power", s = 0.5 }\n[exponents]\nsigma2 = 0.75\n')
    assert cli.main(["solve", "--config", cfg, "--out", str(tmp_path)]) == 2
    assert "= 0.5" in capsys.readouterr().err


def test_solve_bit_identical(tmp_path):
    cfg = write(tmp_path, SMALL_SOLVE)
    assert cli.main(["solve", "--config", cfg, "--out", str(tmp_path / "a")]) == 0
    assert cli.main(["solve", "--config", cfg, "--out", str(tmp_path / "b"), "--threads", "3"]) == 0
    for name in ("solve.json", "solve.csv", "solve/path_0000.csv", "solve/path_0002.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    data = json.loads((tmp_path / "a" / "solve.json").read_text())
    assert data["seed"] == 3 and len(data["metrics"]["residual_histories"]) == 3
    assert cli.main(["solve", "--config", cfg, "--out", str(tmp_path / "c"), "--seed", "4"]) == 0
    assert (tmp_path / "a" / "solve.csv").read_bytes() != (tmp_path / "c" / "solve.csv").read_bytes()


def test_solve_paths_flag(tmp_path):
    cfg = write(tmp_path, SMALL_SOLVE)
    assert cli.main(["solve", "--config", cfg, "--paths", "2", "--out", str(tmp_path)]) == 0
    assert len(list((tmp_path / "solve").glob("path_*.csv"))) == 2


def test_report_aggregates(tmp_path):
    out = str(tmp_path)
    assert cli.main(["report", "--out", out]) == 1  # nothing to aggregate
    cli.main(["ml-check", "--out", out])
    assert cli.main(["report", "--out", out]) == 0
    bad = json.loads((tmp_path / "ml-check.json").read_text())
    bad["passed"] = False
    (tmp_path / "fake.json").write_text(json.dumps(bad))
    assert cli.main(["report", "--out", out]) == 1
    rep = json.loads((tmp_path / "report.json").read_text())
    assert len(rep["verdicts"]) == 2


def test_fit_exponents_band_target(tmp_path):
    assert cli.main(["fit-exponents", "--target", "band-j", "--out", str(tmp_path)]) == 0


def test_bad_threads(tmp_path):
    assert cli.main(["ml-check", "--threads", "0", "--out", str(tmp_path)]) == 2
