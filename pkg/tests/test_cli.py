import json

import pytest

from kpolab import cli
from kpolab.cli import RunConfig, main, run
from kpolab.datasets import load, loads_csv, loads_json


def invoke(tmp_path, *args, name="out.csv"):
    out = tmp_path / name
    code = main([*args, "--out", str(out)])
    return code, out


def test_config_round_trip():
    cfg = RunConfig("dos", mu=3, delta=-0.5, xi=1.0, grid=(0, 1, 5), window=(-2, 0), samples=5000, seed=7)
    cfg.validate()
    back = RunConfig.from_json(cfg.to_json())
    assert back == cfg
    assert back.config_hash() == cfg.config_hash()


def test_hash_ignores_output_location_and_threads():
    a = RunConfig("spectrum", out="a.csv", threads=1).validate()
    b = RunConfig("spectrum", out="b.csv", threads=4).validate()
    assert a.config_hash() == b.config_hash()
    assert a.config_hash() != RunConfig("spectrum", seed=1).validate().config_hash()


@pytest.mark.parametrize("data,field", [
    ({"command": "spectrum", "mu": 5}, "mu"),
    ({"command": "spectrum", "levels": 0}, "levels"),
    ({"command": "spectrum", "grid": [1, 0, 3]}, "grid"),
    ({"command": "spectrum", "colour": 1}, "colour"),
    ({"command": "spectrum", "format": "xml"}, "format"),
    ({"command": "spectrum", "samples": 0}, "samples"),
])
def test_config_errors_name_the_field(data, field):
    with pytest.raises(cli.ConfigError, match=field):
        RunConfig.from_dict(data)


def test_spectrum_dataset_and_byte_determinism(tmp_path):
    args = ["spectrum", "--mu", "2", "--xi", "5", "--grid", "4:10:4", "--levels", "30", "--n-trunc", "300"]
    code, a = invoke(tmp_path, *args, name="a.csv")
    assert code == 0
    code, b = invoke(tmp_path, *args, name="b.csv")
    assert a.read_bytes() == b.read_bytes()
    d = load(a)
    assert d.schema == "kpolab.spectrum/1"
    assert set(d.column("sector")) == {0, 1}
    assert len(d.rows) == 4 * 30
    assert len(d.metadata["config_hash"]) == 64
    assert d.metadata["units"]["energy"] == "K"


def test_four_photon_absolute_spectrum_turns_negative():
    cfg = RunConfig("spectrum", mu=4, delta=0.0, axis="xi", grid=(0.0, 0.45, 4), levels=4, n_trunc=600,
                    reference="absolute")
    d = run(cfg)
    e = {(x, lvl): en for x, lvl, _, en in d.rows}
    assert e[(0.0, 0)] == 0.0
    assert e[(0.45, 0)] < 0


def test_json_output(tmp_path):
    code, out = invoke(tmp_path, "critical-points", "--mu", "2", "--delta", "4", "--xi", "1", "--format", "json",
                       name="cp.json")
    assert code == 0
    d = loads_json(out.read_text())
    assert sorted(d.column("kind")) == ["global_min", "global_min", "hyperbolic", "hyperbolic", "local_max"]
    assert d.extras["region"] == "III"


def test_three_photon_phase_diagram_labels():
    # dyadic steps land exactly on the lines delta = -1 and delta = 0 at xi = 1
    coarse = RunConfig("phase-diagram", mu=3, grid=(-1.25, 1.0, 10), xi_grid=(1.0, 1.0, 1))
    narrow = RunConfig("phase-diagram", mu=3, delta=-1.0625, xi=1.0)
    labels = set(run(coarse).column("region")) | set(run(narrow).column("region"))
    assert labels == {"I", "II", "III-line", "IV", "V-line", "VI"}


def test_four_photon_unbounded_cells():
    d = run(RunConfig("phase-diagram", mu=4, grid=(-1.0, 1.0, 3), xi_grid=(0.2, 0.6, 3)))
    for delta, xi, region, tilde, count, kinds, unbounded in d.rows:
        assert unbounded == (abs(xi) >= 0.5)
        if unbounded:
            assert count is None and region == "unbounded"


def test_single_cell_lattice():
    assert len(run(RunConfig("phase-diagram", mu=2, delta=1.0, xi=0.5)).rows) == 1


def test_empty_dos_window_exits_zero(tmp_path, capsys):
    code, out = invoke(tmp_path, "dos", "--mu", "2", "--delta", "4", "--xi", "1", "--levels", "20",
                       "--window", "1000:1010", "--bin-width", "1")
    assert code == 0
    assert "warning" in capsys.readouterr().err
    d = load(out)
    assert sum(d.column("count")) == 0
    assert "empty" in d.extras["notes"]


def test_exit_codes(tmp_path, capsys):
    assert main(["spectrum", "--mu", "7"]) == 2
    assert "mu" in capsys.readouterr().err
    assert main(["critical-points", "--mu", "4", "--delta", "1", "--xi", "0.6"]) == 4
    assert main(["tunneling", "--mu", "2", "--delta", "-3", "--xi", "1", "--samples", "2000"]) == 4


def test_config_file_and_flag_override(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"mu": 2, "delta": 4.0, "xi": 1.0, "levels": 10, "n_trunc": 100}))
    code, out = invoke(tmp_path, "spectrum", "--config", str(path), "--levels", "5")
    assert code == 0
    d = load(out)
    assert d.metadata["config"]["levels"] == 5 and len(d.rows) == 5
    path.write_text("[1, 2]")
    assert main(["spectrum", "--config", str(path)]) == 2


def test_environment_overrides(tmp_path):
    args = cli.build_parser().parse_args(["spectrum", "--out", "x.csv"])
    cfg = cli.config_from_args(args, {"KPOLAB_THREADS": "3", "KPOLAB_OUT_DIR": str(tmp_path)})
    assert cfg.threads == 3 and cfg.out == str(tmp_path / "x.csv")
    args = cli.build_parser().parse_args(["spectrum", "--threads", "2"])
    assert cli.config_from_args(args, {"KPOLAB_THREADS": "3"}).threads == 2
    with pytest.raises(cli.ConfigError, match="threads"):
        cli.config_from_args(cli.build_parser().parse_args(["spectrum"]), {"KPOLAB_THREADS": "x"})


def test_threads_do_not_change_output():
    base = dict(mu=3, delta=0.0, xi=1.0, grid=(-1.0, 1.0, 5), levels=20, n_trunc=150)
    a = run(RunConfig("spacing", count=5, threads=1, **base))
    b = run(RunConfig("spacing", count=5, threads=3, **base))
    assert a.to_csv() == b.to_csv()


def test_ehrenfest_first_order_row():
    cfg = RunConfig("ehrenfest", mu=2, delta=1.5, axis="xi", grid=(-0.5, 0.5, 51), n_eff=50, n_trunc=1000,
                    threads=4)
    d = run(cfg)
    assert d.extras["order"] == 1
    assert abs(abs(d.extras["jump_d1"]) - 3.0) <= 0.15
    assert len(d.rows) == 51


def test_crossings_and_spacing_commands():
    cfg = RunConfig("crossings", mu=2, xi=5.0, grid=(21.5, 22.5, 21), levels=120, n_trunc=500, gap_threshold=0.5)
    d = run(cfg)
    kinds = set(d.column("kind"))
    assert "real" in kinds
    cfg = RunConfig("spacing", mu=1, xi=5.0, grid=(26.0, 27.0, 11), levels=160, n_trunc=400)
    d = run(cfg)
    assert set(d.column("sector")) == {"all"}


def test_husimi_grid_command():
    cfg = RunConfig("husimi", mu=2, delta=3.0, xi=1.0, resolution=64, husimi_points=11)
    d = run(cfg)
    assert len(d.rows) == 121
    assert all(q >= 0 for q in d.column("Q"))


def test_tunneling_command_summary():
    cfg = RunConfig("tunneling", mu=1, delta=29.05, xi=5.0, times=(0.0, 2.0, 3), resolution=128, samples=5000)
    d = run(cfg)
    assert d.column("effective")[0] == 0.0
    assert set(d.extras["summary"][0]) == {"delta", "min", "final", "argmin_time"}


def test_csv_reloads_from_stdout(capsys):
    assert main(["critical-points", "--mu", "3", "--delta", "-1", "--xi", "1"]) == 0
    d = loads_csv(capsys.readouterr().out)
    assert len(d.rows) == 7
