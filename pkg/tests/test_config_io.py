import math

import numpy as np
import pytest

from bosonic_twin.config import ConfigError, load_config, parse_config, parse_quantity
from bosonic_twin.io import DatasetFormatError, read_dataset, read_json, write_dataset, write_json, write_wigner, read_wigner
from bosonic_twin.measurement import Dataset, WignerGrid


@pytest.mark.parametrize(
    "text, dim, value",
    [("1.4 ms", "time", 1.4e-3), ("30us", "time", 30e-6), ("30 µs", "time", 30e-6), ("500 kHz", "frequency", 5e5),
     ("inf", "time", math.inf), ("90 deg", "angle", math.pi / 2), ("-2e-3 s", "time", -2e-3)],
)
def test_parse_quantity(text, dim, value):
    assert parse_quantity(text, dim) == pytest.approx(value)


@pytest.mark.parametrize("text, dim", [(1.4, "time"), ("1.4 kHz", "time"), ("fast", "time"), (None, "time")])
def test_parse_quantity_rejects(text, dim):
    with pytest.raises(ConfigError):
        parse_quantity(text, dim, "device.x")


def test_parse_config_full():
    cfg = parse_config(
        {
            "device": {"chi": "500 kHz", "cavity_T1": "1.4 ms", "nbar_th": 0.05},
            "hilbert": {"n_cav": 25},
            "readout": {"contrast": 0.9, "baseline": 0.05, "shots": 1000, "seed": 3},
            "experiment": {"kind": "t2_ramsey", "sweep": {"stop": "1 ms", "points": 11}, "detuning": "5 kHz",
                           "alpha": {"re": 1, "im": 0.5}},
            "output": {"dir": "x", "format": "json"},
        }
    )
    assert cfg.device.cavity_T1 == pytest.approx(1.4e-3) and cfg.device.nbar_th == 0.05
    assert cfg.hilbert.n_cav == 25 and cfg.readout.shots == 1000
    assert cfg.delays.size == 11 and cfg.detuning == 5e3 and cfg.alpha == 1 + 0.5j
    assert cfg.fmt == "json"


@pytest.mark.parametrize(
    "doc, where",
    [
        ({"devise": {}}, "<config>"),
        ({"device": {"chi": "500 kHz", "colour": 1}}, "device"),
        ({"device": {"nbar_th": 2.0}}, "device"),
        ({"hilbert": {"n_cav": 1}}, "hilbert"),
        ({"experiment": {"sweep": {"stop": "1 ms", "points": 2.5}}}, "experiment.sweep.points"),
        ({"experiment": {"alpha": "one"}}, "experiment.alpha"),
        ({"devices": [{"name": "a", "cavity_T1": "0 ms"}]}, "devices[0]"),
        ({"readout": {"shots": 0}}, "readout.shots"),
    ],
)
def test_config_errors_name_the_field(doc, where):
    with pytest.raises(ConfigError) as info:
        parse_config(doc)
    assert info.value.where == where


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("a: [1, 2\n")
    with pytest.raises(ConfigError, match="bad.yaml"):
        load_config(bad)


def test_bundled_demo_configs_parse():
    from pathlib import Path

    root = Path(__file__).resolve().parents[1] / "demos" / "configs"
    for path in sorted(root.glob("*.yaml")):
        load_config(path)


@pytest.mark.parametrize("fmt", ["csv", "json"])
def test_dataset_round_trip(tmp_path, fmt):
    rng = np.random.default_rng(0)
    t = np.sort(rng.uniform(0, 1e-3, 17))
    ds = Dataset("delay", t, rng.uniform(0, 1, 17), rng.uniform(0, 1, 17), shots_per_point=100,
                 meta={"kind": "t1_fock", "detuning": 1234.5})
    path = write_dataset(tmp_path / f"d.{fmt}", ds, fmt)
    back = read_dataset(path)
    np.testing.assert_array_equal(back.sweep_values, ds.sweep_values)
    np.testing.assert_array_equal(back.trace, ds.trace)
    np.testing.assert_array_equal(back.shot_fraction, ds.shot_fraction)
    assert back.shots_per_point == 100 and back.meta == ds.meta and back.sweep_name == "delay"
    assert not list(tmp_path.glob("*.part"))


def test_dataset_phase_sweep_round_trip(tmp_path):
    ds = Dataset("phase", np.linspace(0, 6, 7), np.linspace(0, 1, 7))
    back = read_dataset(write_dataset(tmp_path / "p.csv", ds))
    assert back.sweep_name == "phase" and back.shot_fraction is None


@pytest.mark.parametrize(
    "text",
    ["", "delay_s,probability\n", "delay_s,prob\n0,0.5\n", "delay_s,probability\n0,0.5,1\n", "delay_s,probability\n0,2\n"],
)
def test_read_dataset_rejects(tmp_path, text):
    p = tmp_path / "d.csv"
    p.write_text(text)
    with pytest.raises(DatasetFormatError):
        read_dataset(p)


def test_json_helpers(tmp_path):
    p = write_json(tmp_path / "x.json", {"b": np.float64(1.5), "a": [np.int64(2), math.inf], "c": 1 + 2j})
    assert read_json(p) == {"a": [2, "inf"], "b": 1.5, "c": {"im": 2.0, "re": 1.0}}
    assert p.read_text().index('"a"') < p.read_text().index('"b"')


def test_wigner_round_trip(tmp_path):
    vals = np.arange(25, dtype=float).reshape(5, 5)
    g = WignerGrid((-1.0, 1.0), (-1.0, 1.0), 5, vals)
    back = read_wigner(write_wigner(tmp_path / "w.csv", g))
    np.testing.assert_array_equal(back.values, vals)
    assert back.re_range == (-1.0, 1.0)
