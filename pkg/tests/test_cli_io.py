"""Config parsing, seed derivation, result files, and the batch CLI."""

import json
import math
import os
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from seedbank_lab.cli import main
from seedbank_lab.config import config_sha256, echo, parse_config, parse_dict
from seedbank_lab.errors import ConfigError
from seedbank_lab.output import (
    fmt,
    histogram,
    line_plot,
    read_csv,
    write_csv,
    write_jsonl,
    write_manifest,
)
from seedbank_lab.streams import block_sizes, derive_seed, parallel_map


def _minimal(**over):
    raw = {
        "seed": 11,
        "geography": {"family": "torus", "dim": 1, "n": 4},
        "kernel": [{"variant": "nearest"}],
        "seedbank": {"provenance": "explicit", "K": [1.0], "e": [1.0]},
        "g": {"kind": "fisher_wright"},
    }
    raw.update(over)
    return raw


# ---------------------------------------------------------------------------
# parsing


def test_minimal_config_fills_documented_defaults():
    cfg = parse_dict(_minimal())
    assert cfg.model == "M2"
    assert cfg.theta0 == 0.5
    assert cfg.replicas == 64
    assert cfg.dt is None
    assert cfg.init == "constant"
    assert cfg.threads == 1
    assert cfg.block_size == 64
    assert cfg.budget is None
    assert cfg.outputs == ("csv", "jsonl", "svg")
    assert cfg.kernel.components[0].rate == 1.0
    assert cfg.kernel.fold and not cfg.kernel.symmetrize
    assert cfg.kernel.eps_fold == 1e-9
    assert cfg.forward is None and cfg.dual is None and cfg.fss is None


def test_forward_section_defaults():
    cfg = parse_dict(_minimal(forward={"horizon": 2.0}))
    assert cfg.forward.horizon == 2.0
    assert cfg.forward.observations == 50
    assert cfg.forward.observe_times == ()
    assert cfg.forward.snapshot == "none"
    assert cfg.forward.dt_budget == 2.0


def test_rejects_theta_out_of_range():
    with pytest.raises(ConfigError, match="theta0"):
        parse_dict(_minimal(theta0=1.2))


def test_unknown_keys_error_with_dotted_path():
    raw = _minimal()
    raw["geography"]["bogus"] = 1
    with pytest.raises(ConfigError, match=r"geography\.bogus"):
        parse_dict(raw)
    raw = _minimal(kernel=[{"variant": "nearest", "typo": 1}])
    with pytest.raises(ConfigError, match=r"kernel\.components\.0\.typo"):
        parse_dict(raw)
    with pytest.raises(ConfigError, match="extra"):
        parse_dict(_minimal(extra=0))


def test_required_keys_and_model_consistency():
    raw = _minimal()
    del raw["seed"]
    with pytest.raises(ConfigError, match="seed"):
        parse_dict(raw)
    poly = {"provenance": "polynomial", "alpha": 0.5, "beta": 1.0, "M": 8}
    with pytest.raises(ConfigError, match=r"seedbank\.M"):
        parse_dict(_minimal(model="M1", seedbank=poly))
    with pytest.raises(ConfigError, match="displacement"):
        parse_dict(_minimal(model="M3"))
    with pytest.raises(ConfigError, match="values"):
        parse_dict(_minimal(g={"kind": "table", "lipschitz": 1.0}))
    with pytest.raises(ConfigError, match="at least 3"):
        parse_dict(_minimal(g={"kind": "table", "values": [0.0, 0.0],
                               "lipschitz": 1.0}))
    with pytest.raises(ConfigError, match="N"):
        parse_dict(_minimal(geography={"family": "hierarchy", "n": 2}))
    with pytest.raises(ConfigError, match="outputs"):
        parse_dict(_minimal(outputs=[]))
    with pytest.raises(ConfigError, match="outputs"):
        parse_dict(_minimal(outputs=["csv", "csv"]))


def test_round_trip_echo_parse_identity():
    raw = _minimal(
        model="M3",
        displacement={"component": {"variant": "heavy_tail", "q": 0.8},
                      "stay": 0.25},
        theta0=0.3,
        dt=0.01,
        budget=1e9,
        forward={"horizon": 4.0, "observe_times": [0.5, 1.0, 4.0],
                 "snapshot": "csv"},
        dual={"lineages": 3, "hazard": True, "exact": True},
        criteria=[{"family": "euclidean", "d": 3, "gamma": 0.5},
                  {"family": "hierarchical", "N": 4, "c": 0.5, "K": 2.0,
                   "e": 0.5, "label": "tall"}],
        fss={"ladder": [1, 2, 4], "s_grid": [0.0, 1.0], "replicas": 8,
             "m_rule": {"kind": "power", "coeff": 0.5, "exponent": 1.0},
             "fg": {"thetas": [0.3, 0.5], "replicas": 2},
             "reference": True,
             "trapping": {"horizon_beta": 1.0, "eps": 0.05, "replicas": 4},
             "diagnostics": {"probe_times": [0.0, 2.0], "replicas": 4}},
        renewal={"gamma": 0.8, "horizon": 100000, "replicas": 5},
    )
    cfg = parse_dict(raw)
    # emit-then-parse through actual JSON text is the identity
    again = parse_dict(json.loads(json.dumps(echo(cfg))))
    assert again == cfg
    assert config_sha256(again) == config_sha256(cfg)


def test_config_hash_sensitive_to_content():
    base = config_sha256(parse_dict(_minimal()))
    assert base == config_sha256(parse_dict(_minimal()))
    assert base != config_sha256(parse_dict(_minimal(seed=12)))


# ---------------------------------------------------------------------------
# seed derivation


def test_derive_seed_repeatable_and_label_sensitive():
    assert derive_seed(7, "noise", 3) == derive_seed(7, "noise", 3)
    assert derive_seed(7, "noise") != derive_seed(7, "dual")
    assert derive_seed(7, "noise") != derive_seed(8, "noise")
    # labels are typed: the int 1 and the string "1" are different streams
    assert derive_seed(0, 1) != derive_seed(0, "1")
    assert 0 <= derive_seed(2**64 - 1, "x") < 2**64
    with pytest.raises(ValueError):
        derive_seed(-1, "x")


def test_derive_seed_no_collisions_over_a_million_replicas():
    seen = {derive_seed(42, "replica", k) for k in range(10**6)}
    assert len(seen) == 10**6


def test_block_sizes_and_parallel_map_order():
    assert block_sizes(10, 4) == [4, 4, 2]
    assert block_sizes(8, 4) == [4, 4]
    assert block_sizes(3, 64) == [3]
    items = list(range(23))
    assert parallel_map(lambda v: v * v, items, 4) == [v * v for v in items]


# ---------------------------------------------------------------------------
# emission


def test_fmt_round_trips_float64_exactly():
    for x in (0.1, 1.0 / 3.0, math.pi, 1e-300, 5e-324, 123456789.123456789,
              -1.5, 0.0):
        assert float(fmt(x)) == x
    assert math.copysign(1.0, float(fmt(-0.0))) == -1.0
    assert fmt(float("nan")) == "nan"
    assert fmt(float("inf")) == "inf"
    assert fmt(float("-inf")) == "-inf"
    assert fmt(True) == "true" and fmt(False) == "false"
    assert fmt(7) == "7"
    assert fmt("label") == "label"


def test_csv_write_read_exact(tmp_path):
    path = tmp_path / "t.csv"
    a = np.array([0.1, 1.0 / 3.0, 5e-324, float("nan"), float("inf")])
    b = np.arange(5, dtype=float)
    write_csv(path, ["a", "b"], [a, b])
    header, cols = read_csv(path)
    assert header == ["a", "b"]
    finite = np.isfinite(a)
    assert np.array_equal(cols[0][finite], a[finite])
    assert np.isnan(cols[0][3]) and np.isinf(cols[0][4])
    assert np.array_equal(cols[1], b)
    with pytest.raises(ValueError, match="columns"):
        write_csv(tmp_path / "bad.csv", ["a"], [a, b])
    with pytest.raises(ValueError, match="length"):
        write_csv(tmp_path / "bad.csv", ["a", "b"], [a, b[:3]])


def test_jsonl_is_sorted_and_refuses_nan(tmp_path):
    path = tmp_path / "r.jsonl"
    write_jsonl(path, [{"b": 1, "a": 2}, {"z": [1, 2]}])
    lines = path.read_text().splitlines()
    assert lines[0] == '{"a":2,"b":1}'
    assert json.loads(lines[1]) == {"z": [1, 2]}
    with pytest.raises(ValueError):
        write_jsonl(path, [{"x": float("nan")}])


def test_svg_plots_are_well_formed(tmp_path):
    line = tmp_path / "line.svg"
    line_plot(line, [0.0, 1.0, 2.0], [np.array([0.0, 0.5, 0.2]),
                                      np.array([1.0, 0.8, 0.9])],
              xlabel="t", ylabel="v", title="paths")
    root = ET.parse(line).getroot()
    assert root.tag.endswith("svg")
    assert any(child.tag.endswith("polyline") for child in root)

    hist = tmp_path / "hist.svg"
    histogram(hist, np.array([0.1, 0.2, 0.2, 0.7, 1.4]), xlabel="x", title="h")
    root = ET.parse(hist).getroot()
    assert root.tag.endswith("svg")
    assert any(child.tag.endswith("rect") for child in root)

    with pytest.raises(ValueError):
        line_plot(tmp_path / "none.svg", [0.0], [], xlabel="", ylabel="", title="")
    with pytest.raises(ValueError):
        histogram(tmp_path / "none.svg", np.array([]), xlabel="", title="")


def test_manifest_identity_and_hash(tmp_path):
    cfg = parse_dict(_minimal())
    d1, d2 = tmp_path / "a", tmp_path / "b"
    d1.mkdir(), d2.mkdir()
    m1 = write_manifest(d1, config_echo=echo(cfg), master_seed=cfg.seed,
                        version="0", outputs=["x.csv"])
    write_manifest(d2, config_echo=echo(cfg), master_seed=cfg.seed,
                   version="0", outputs=["x.csv"])
    assert (d1 / "manifest.json").read_bytes() == (d2 / "manifest.json").read_bytes()
    assert (d1 / "config_echo.json").read_bytes() \
        == (d2 / "config_echo.json").read_bytes()
    assert m1["config_sha256"] == config_sha256(cfg)
    m3 = write_manifest(d2, config_echo=echo(cfg), master_seed=cfg.seed + 1,
                        version="0", outputs=["x.csv"])
    assert m3["master_seed"] != m1["master_seed"]


# ---------------------------------------------------------------------------
# the command line, end to end


def _write(tmp_path, name, raw):
    path = tmp_path / name
    path.write_text(json.dumps(raw, indent=1))
    return str(path)


def test_cli_criteria_end_to_end(tmp_path, capsys):
    raw = _minimal(outputs=["csv"], criteria=[
        {"family": "euclidean", "d": 3, "gamma": 0.5, "label": "flat3"},
        {"family": "heavy_tail", "q": 0.5, "gamma": 1.0},
        {"family": "hierarchical", "N": 4, "c": 0.5, "K": 2.0, "e": 0.5},
    ])
    out = tmp_path / "run"
    code = main(["criteria", "--config", _write(tmp_path, "c.json", raw),
                 "--out", str(out)])
    assert code == 0
    table = capsys.readouterr().out
    assert "flat3" in table and "case1" in table
    for name in ("verdicts.csv", "manifest.json", "config_echo.json",
                 "run_info.json"):
        assert (out / name).exists()
    lines = (out / "verdicts.csv").read_text().splitlines()
    assert lines[0] == "label,family,verdict,value,tail_exponent"
    assert len(lines) == 4
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["outputs"] == ["verdicts.csv"]
    assert manifest["master_seed"] == 11


def test_cli_exit_codes(tmp_path):
    # 2: config trouble, in all its shapes
    assert main(["forward", "--config", str(tmp_path / "absent.json"),
                 "--out", str(tmp_path / "o1")]) == 2
    raw = _minimal(outputs=["csv"], criteria=[{"family": "euclidean", "d": 1,
                                               "gamma": 0.5}])
    cfg_path = _write(tmp_path, "c.json", raw)
    assert main(["forward", "--config", cfg_path,
                 "--out", str(tmp_path / "o2")]) == 2  # section missing
    assert main(["criteria", "--config", cfg_path, "--out",
                 str(tmp_path / "o3"), "--seed", "-1"]) == 2
    bad = _minimal(outputs=["jsonl"], criteria=[{"family": "euclidean", "d": 1,
                                                 "gamma": 0.5}])
    assert main(["criteria", "--config", _write(tmp_path, "bad.json", bad),
                 "--out", str(tmp_path / "o4")]) == 2  # nothing it can emit

    # 3: refused before any work when the budget cannot cover the run
    humble = _minimal(forward={"horizon": 10.0}, budget=10.0)
    assert main(["forward", "--config", _write(tmp_path, "h.json", humble),
                 "--out", str(tmp_path / "o5")]) == 3

    # 4: a numerical diagnostic that the run cannot answer
    sparse = _minimal(seed=1, renewal={"gamma": 0.51, "horizon": 1000,
                                       "replicas": 1})
    assert main(["renewal", "--config", _write(tmp_path, "s.json", sparse),
                 "--out", str(tmp_path / "o6")]) == 4


def test_cli_seed_override_changes_results(tmp_path):
    raw = _minimal(
        replicas=4, outputs=["csv"],
        forward={"horizon": 1.0, "observations": 3, "snapshot": "csv"})
    cfg_path = _write(tmp_path, "f.json", raw)
    out1, out2, out3 = (tmp_path / n for n in ("r1", "r2", "r3"))
    assert main(["forward", "--config", cfg_path, "--out", str(out1)]) == 0
    assert main(["forward", "--config", cfg_path, "--out", str(out2)]) == 0
    assert main(["forward", "--config", cfg_path, "--out", str(out3),
                 "--seed", "123"]) == 0
    t1 = (out1 / "trajectories.csv").read_bytes()
    assert t1 == (out2 / "trajectories.csv").read_bytes()
    assert t1 != (out3 / "trajectories.csv").read_bytes()
    assert (out1 / "snapshot.csv").exists()
    assert json.loads((out3 / "manifest.json").read_text())["master_seed"] == 123
    assert json.loads((out1 / "manifest.json").read_text())["master_seed"] == 11


def test_cli_worker_count_never_reaches_the_bytes(tmp_path):
    raw = _minimal(
        seed=99,
        seedbank={"provenance": "polynomial", "alpha": 0.5, "beta": 1.0, "M": 2},
        replicas=16, block_size=4,
        fss={"ladder": [1, 2], "s_grid": [0.0, 0.5, 1.0], "replicas": 16,
             "reference": True,
             "trapping": {"horizon_beta": 1.0, "eps": 0.05, "replicas": 8},
             "diagnostics": {"probe_times": [0.0, 1.0], "replicas": 8}},
    )
    cfg_path = _write(tmp_path, "fss.json", raw)
    serial, threaded = tmp_path / "serial", tmp_path / "threaded"
    assert main(["fss", "--config", cfg_path, "--out", str(serial),
                 "--threads", "1"]) == 0
    assert main(["fss", "--config", cfg_path, "--out", str(threaded),
                 "--threads", "8"]) == 0
    names = sorted(os.listdir(serial))
    assert names == sorted(os.listdir(threaded))
    compared = 0
    for name in names:
        if name == "run_info.json":  # wall-clock facts live here on purpose
            continue
        assert (serial / name).read_bytes() == (threaded / name).read_bytes(), name
        compared += 1
    assert compared >= 6  # ensembles, timescales, trapping, report, manifest
