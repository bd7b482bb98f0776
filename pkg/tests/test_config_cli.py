import io
import math
import os

import numpy as np
import pytest

from gbma import cli
from gbma.config import SCHEMA, Config, data_path, from_text, load, parse_text
from gbma.data import MSD_FEATURES
from gbma.errors import ConfigError
from gbma.presets import PRESETS, load_preset
from gbma.report import CSV_HEADER, run

SMALL = """\
name = small
[data]
source = synthetic
d = 3
seed = 2
[nodes]
N = 30
[channel]
kind = rayleigh
[noise]
sigma_w_sq = 0.5
[run]
beta = auto:strong
k_max = 25
reps = 4
[output]
plot = false
"""


def small(extra=()):
    return from_text(SMALL).with_overrides(list(extra))


def main(argv):
    buf = io.StringIO()
    code = cli.main(argv, out=buf)
    return code, buf.getvalue()


# -- grammar ---------------------------------------------------------------


def test_sections_dotted_keys_and_comments():
    raw = parse_text("""
# whole-line comment
name = x   # trailing comment
[run]
k_max = 7
run.reps = 3
channel.kind = unit
""")
    assert raw == {"name": "x", "run.k_max": "7", "run.reps": "3", "channel.kind": "unit"}


def test_hash_inside_value_without_space_is_kept():
    assert parse_text("notes = a#b")["notes"] == "a#b"


def test_grammar_errors():
    with pytest.raises(ConfigError, match="cannot parse"):
        parse_text("this is not a line")
    with pytest.raises(ConfigError, match="duplicate"):
        parse_text("[run]\nk_max = 1\nrun.k_max = 2")
    with pytest.raises(ConfigError, match="unknown key"):
        from_text("run.kmax = 3")
    with pytest.raises(ConfigError, match="bad value"):
        from_text("run.k_max = zero")
    with pytest.raises(ConfigError, match="bad value"):
        from_text("run.beta = -1")


def test_typed_values_and_defaults():
    cfg = from_text("run.beta = 0.25\nrun.theta0 = offset:1,2\nfield.snr_db = inf\ndata.limit = none")
    assert cfg["run.beta"] == 0.25 and cfg["run.theta0"] == ("offset", (1.0, 2.0))
    assert math.isinf(cfg["field.snr_db"]) and cfg["data.limit"] is None
    assert cfg["run.reps"] == 200 and cfg["nodes.N"] == 100


def test_cross_checks():
    with pytest.raises(ConfigError, match="does not match"):
        from_text("data.source = localization")
    with pytest.raises(ConfigError, match="not both"):
        from_text("noise.sigma_w_sq = 1\nnoise.snr_db = 3")
    with pytest.raises(ConfigError, match="sweep.values"):
        from_text("sweep.param = nodes.N")
    with pytest.raises(ConfigError, match="energy study"):
        from_text("study.kind = energy")
    with pytest.raises(ConfigError, match="bad sweep value"):
        from_text("sweep.param = nodes.N\nsweep.values = 10,x")


def test_overrides():
    cfg = small(["run.reps=9", "nodes.N = 40"])
    assert cfg["run.reps"] == 9 and cfg["nodes.N"] == 40 and cfg["data.d"] == 3
    with pytest.raises(ConfigError):
        small(["run.reps"])
    with pytest.raises(ConfigError):
        small(["bogus.key=1"])


def test_render_round_trip():
    cfg = small(["run.theta0=vector:1,2,3", "field.source=10,20"])
    text = cfg.render({"beta": "0.1"})
    again = from_text(text)
    for key in SCHEMA:
        assert again[key] == cfg[key], key
    assert again.derived == {"beta": "0.1"}
    assert again.render({"beta": "0.1"}) == text


def test_every_preset_parses_and_renders():
    for name in PRESETS:
        cfg = load_preset(name)
        assert from_text(cfg.render())["name"] == name


def test_data_path_uses_environment(monkeypatch, tmp_path):
    cfg = from_text("data.path = songs.csv")
    monkeypatch.delenv("GBMA_DATA_DIR", raising=False)
    assert data_path(cfg) == "songs.csv"
    monkeypatch.setenv("GBMA_DATA_DIR", str(tmp_path))
    assert data_path(cfg) == os.path.join(str(tmp_path), "songs.csv")
    assert data_path(from_text("data.path = /abs/x.csv")) == "/abs/x.csv"


# -- reports ---------------------------------------------------------------


def test_csv_header_and_columns(tmp_path):
    summary = run(small(), out_dir=str(tmp_path))
    lines = open(summary.points[0].csv_path).read().splitlines()
    assert lines[0] == ("k,excess_mean,excess_se,r_sq_mean,bound_thm1,bound_thm2a,bound_thm2b,"
                        "bound_central,energy_cum")
    assert lines[0] == CSV_HEADER
    assert len(lines) == 1 + 26
    first = lines[1].split(",")
    assert first[0] == "0" and len(first) == 9
    # Rayleigh fading: no equal-gain bound, empty cells
    assert first[5] == "" and first[4] != ""


def test_manifest_holds_config_and_constants(tmp_path):
    summary = run(small(), out_dir=str(tmp_path))
    man = load(summary.points[0].manifest_path)
    for key in ("mu", "L", "L_bar", "mu_h", "sigma_h_sq", "beta", "c"):
        assert key in man.derived, key
    assert man["nodes.N"] == 30 and man["run.reps"] == 4


def test_manifest_reruns_byte_identical(tmp_path):
    first = run(small(), out_dir=str(tmp_path / "a"))
    man = load(first.points[0].manifest_path)
    second = run(man, out_dir=str(tmp_path / "b"))
    a = open(first.points[0].csv_path, "rb").read()
    b = open(second.points[0].csv_path, "rb").read()
    assert a == b


def test_manifest_with_tampered_constants_is_rejected(tmp_path):
    summary = run(small(), out_dir=str(tmp_path))
    text = open(summary.points[0].manifest_path).read()
    text = text.replace("[derived]\n", "[derived]\nmu_h = 9.0\n", 1)
    lines = [ln for ln in text.splitlines() if not ln.startswith("mu_h = ") or ln == "mu_h = 9.0"]
    with pytest.raises(ConfigError, match="derived values changed"):
        run(from_text("\n".join(lines)), out_dir=str(tmp_path / "x"))


def test_sweep_writes_one_csv_per_value(tmp_path):
    cfg = small(["sweep.param=nodes.N", "sweep.values=20,40"])
    summary = run(cfg, out_dir=str(tmp_path))
    names = sorted(os.path.basename(p.csv_path) for p in summary.points)
    assert names == ["small__N_20.csv", "small__N_40.csv"]


def test_msd_source_through_data_dir(monkeypatch, tmp_path):
    rng = np.random.default_rng(0)
    rows = np.column_stack([rng.integers(1950, 2010, 60), rng.normal(size=(60, MSD_FEATURES))])
    (tmp_path / "msd.csv").write_text("\n".join(",".join(repr(float(v)) for v in r) for r in rows))
    monkeypatch.setenv("GBMA_DATA_DIR", str(tmp_path))
    cfg = small(["data.source=msd", "data.path=msd.csv", "data.limit=40", "nodes.N=40", "run.reps=1",
                 "run.k_max=5"])
    summary = run(cfg, out_dir=str(tmp_path / "out"))
    assert summary.points[0].resolved.d == MSD_FEATURES


# -- CLI -------------------------------------------------------------------


def write_cfg(tmp_path, extra=()):
    p = tmp_path / "small.cfg"
    p.write_text(small(extra).render())
    return str(p)


def test_cli_run_ok(tmp_path):
    code, out = main(["run", write_cfg(tmp_path), "--out", str(tmp_path / "o"), "--no-plot"])
    assert code == 0
    assert "4 reps, 0 diverged" in out and os.path.exists(tmp_path / "o" / "small.csv")


def test_cli_divergence_exits_1(tmp_path):
    cfg = write_cfg(tmp_path, ["run.beta=50", "channel.kind=unit", "noise.sigma_w_sq=0"])
    code, out = main(["run", cfg, "--out", str(tmp_path / "o"), "--no-plot"])
    assert code == 1 and "4 diverged" in out


def test_cli_failed_validator_exits_1(tmp_path):
    # ridge passes; the localization loss has no certified constants, so the check fails
    cfg = write_cfg(tmp_path, ["checks.cocoercivity=true", "checks.trials=200"])
    code, out = main(["validate", cfg])
    assert code == 0 and "check cocoercivity: pass" in out

    loc = tmp_path / "loc.cfg"
    loc.write_text(load_preset("fig4").with_overrides(["checks.cocoercivity=true"]).render())
    code, out = main(["validate", str(loc)])
    assert code == 1 and "check cocoercivity: FAIL" in out


def test_cli_config_errors_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("run.kmax = 3\n")
    assert main(["run", str(bad)])[0] == 2
    assert main(["run", str(tmp_path / "missing.cfg")])[0] == 2
    assert main(["preset", "nope"])[0] == 2
    assert main(["preset", "nope", "--show"])[0] == 2
    assert main(["run", write_cfg(tmp_path), "--set", "run.reps=0"])[0] == 2
    missing = write_cfg(tmp_path, ["data.source=msd", "data.path=/nonexistent/msd.csv"])
    assert main(["run", missing])[0] == 2
    assert "error:" in capsys.readouterr().err


def test_cli_preset_list_and_show():
    code, out = main(["preset", "--list"])
    assert code == 0 and sorted(ln.split(":")[0] for ln in out.splitlines()) == sorted(PRESETS)
    code, out = main(["preset", "fig3b", "--show"])
    assert code == 0 and out == PRESETS["fig3b"]


def test_cli_validate_prints_constants(tmp_path):
    code, out = main(["validate", write_cfg(tmp_path, ["checks.moments=true",
                                                       "checks.moment_draws=4000"])])
    assert code == 0
    assert "beta = " in out and "check mean_v: pass" in out and "check second_moment_v: pass" in out


def test_cli_bounds(tmp_path):
    code, out = main(["bounds", write_cfg(tmp_path), "--out", str(tmp_path / "b")])
    assert code == 0 and "thm1" in out
    lines = open(tmp_path / "b" / "small__bounds.csv").read().splitlines()
    assert lines[0] == "k,bound_thm1,bound_thm2a,bound_thm2b,bound_central" and len(lines) == 27


def test_cli_sweep(tmp_path):
    code, out = main(["sweep", write_cfg(tmp_path), "--param", "nodes.N", "--values", "20", "40",
                      "--out", str(tmp_path / "s"), "--no-plot"])
    assert code == 0
    assert os.path.exists(tmp_path / "s" / "small__N_20.csv")
    assert os.path.exists(tmp_path / "s" / "small__N_40.csv")


def test_cli_set_override(tmp_path):
    code, _ = main(["run", write_cfg(tmp_path), "--set", "run.reps=2", "--out", str(tmp_path / "o"),
                    "--no-plot"])
    assert code == 0
    assert load(str(tmp_path / "o" / "small.manifest"))["run.reps"] == 2


def test_config_object_defaults():
    assert Config()["name"] == "run"
