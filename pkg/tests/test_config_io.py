import numpy as np
import pytest

from stochch.config import (OUTPUT_ROOT_ENV, ConfigError, ExperimentConfig, apply_overrides,
                            dumps, loads)
from stochch.mesh import build_uniform_mesh, refine
from stochch.vtk import read_vtk, write_vtk

TEXT = """
experiment = "one_circle"
realizations = 3
base_seed = 10
eps_list = [0.05, 0.0125]
T = 1e-3

[ch]
gamma = 1.0
g = 25.1

[noise]
variant = "white"
"""


def test_loads_and_derived_objects():
    cfg = loads(TEXT)
    assert cfg.seed_list() == [10, 11, 12]
    p = cfg.ch_params(1)
    assert p.eps == 0.0125 and p.g == 25.1
    assert p.h_min == pytest.approx(min(np.pi / 4 * 0.0125, 1 / 64))
    assert cfg.ch_params(0).h_min == pytest.approx(1 / 64)
    assert cfg.noise_spec(4).seed == 4


def test_overrides():
    cfg = loads(TEXT, ["realizations=2", "ch.g=0.0", "eps_list=[0.1]", "noise.variant=smooth_cosine"])
    assert cfg.realizations == 2 and cfg.ch["g"] == 0.0
    assert cfg.eps_list == (0.1,) and cfg.noise["variant"] == "smooth_cosine"
    with pytest.raises(ConfigError):
        apply_overrides({}, ["novalue"])
    with pytest.raises(ConfigError):
        apply_overrides({}, ["a.b.c=1"])


@pytest.mark.parametrize("bad", [
    'experiment = "nope"',
    "realizations = 0",
    "seeds = [1, 1]\nrealizations = 2",
    "eps_list = [-0.1]",
    "colour = 3",
    "[ch]\nwidth = 2",
    "[ch]\nk = -1.0",
    "not toml at all ===",
])
def test_invalid_configs(bad):
    with pytest.raises(ConfigError):
        loads(bad)


def test_hash_and_roundtrip(tmp_path, monkeypatch):
    cfg = loads(TEXT)
    again = loads(dumps(cfg))
    assert again == cfg
    assert again.config_hash() == cfg.config_hash()
    assert loads(TEXT, ["T=2e-3"]).config_hash() != cfg.config_hash()
    # key order in the file does not matter
    assert loads("\n".join(reversed(TEXT.split("\n[ch]")[0].splitlines())) + "\n[ch]"
                 + TEXT.split("\n[ch]")[1]).config_hash() == cfg.config_hash()
    monkeypatch.setenv(OUTPUT_ROOT_ENV, str(tmp_path))
    assert cfg.run_dir().parent == tmp_path
    assert cfg.run_dir().name == f"one_circle-{cfg.config_hash()[:12]}"
    monkeypatch.delenv(OUTPUT_ROOT_ENV)
    assert str(cfg.run_dir().parent) == cfg.output


def test_default_config_valid():
    cfg = ExperimentConfig()
    assert cfg.experiment == "custom"
    assert cfg.ch_params(0).h_max == pytest.approx(1 / 64)


def test_vtk_roundtrip(tmp_path):
    mesh, _ = refine(build_uniform_mesh(3), [0, 4])
    rng = np.random.default_rng(0)
    fields = {"X": rng.standard_normal(mesh.num_nodes), "w": rng.random(mesh.num_nodes) * 1e-9}
    write_vtk(tmp_path / "s.vtk", mesh, fields, title="t=0.1")
    nodes, tris, back = read_vtk(tmp_path / "s.vtk")
    np.testing.assert_array_equal(nodes, mesh.nodes)
    np.testing.assert_array_equal(tris, mesh.triangles)
    for k, v in fields.items():
        np.testing.assert_array_equal(back[k], v)
    text = (tmp_path / "s.vtk").read_text().splitlines()
    assert text[0].startswith("# vtk DataFile") and text[3] == "DATASET UNSTRUCTURED_GRID"
    with pytest.raises(ValueError):
        write_vtk(tmp_path / "bad.vtk", mesh, {"X": np.zeros(3)})


def test_shipped_configs_load():
    from pathlib import Path
    from stochch.config import load
    files = sorted((Path(__file__).parent.parent / "configs").glob("*.toml"))
    assert len(files) >= 5
    for f in files:
        cfg = load(f)
        assert cfg.config_hash() == load(f).config_hash()
