import math

import numpy as np
import pytest

from fireworks.config import DEFAULTS, apply_override, load_config
from fireworks.errors import ConfigError

MINIMAL = """
grid:
  x_box: [-4, 4]
  v_box: [-1, 1]
  nx: 16
  nv: 9
"""


def test_minimal_config_uses_defaults():
    cfg = load_config(text=MINIMAL)
    assert cfg.grid.nt == DEFAULTS["grid"]["nt"] and cfg.grid.t_final == 1.0
    assert cfg.solver["mapping"] == "J_plus" and cfg.mc["seed"] == 2026
    assert cfg.snapshot_every == math.ceil(257 / 10)
    idx = cfg.snapshot_indices()
    assert idx[0] == 0 and idx[-1] == 256


@pytest.mark.parametrize("missing", ["x_box", "v_box", "nx", "nv"])
def test_required_fields(missing):
    text = "\n".join(l for l in MINIMAL.splitlines() if missing + ":" not in l)
    with pytest.raises(ConfigError) as exc:
        load_config(text=text)
    assert exc.value.field == f"grid.{missing}"


def test_error_reports_line():
    text = MINIMAL + "solver:\n  mapping: K\n"
    with pytest.raises(ConfigError) as exc:
        load_config(text=text)
    assert exc.value.field == "solver.mapping" and exc.value.line == 8
    assert "line 8" in str(exc.value)


def test_yaml_syntax_error_line():
    with pytest.raises(ConfigError) as exc:
        load_config(text="grid:\n  nx: [1, 2\n")
    assert exc.value.line is not None


@pytest.mark.parametrize("bad", ["solver.a=1.5", "solver.tol=-1", "mc.seed=-3",
                                 "grid.nx=1", "output.snapshot_format=hdf5", "grid.colour=1",
                                 "kernels.f0.kind=spline", "kernels.q={kind: constant}"])
def test_invalid_values_rejected(bad):
    overrides = [bad] if "a=" not in bad else ["solver.mapping=J", bad]
    with pytest.raises(ConfigError):
        load_config(text=MINIMAL, overrides=overrides)


def test_overrides_seed_and_out(tmp_path):
    cfg = load_config(text=MINIMAL, overrides=["grid.nt=33", "kernels.eta.value=0.25",
                                                "mc.checkpoints=[0.5, 1.0]"],
                      seed=99, out=tmp_path)
    assert cfg.grid.nt == 33 and cfg.mc["seed"] == 99
    assert cfg.output["dir"] == str(tmp_path)
    assert cfg.mc_checkpoints() == [0.5, 1.0]
    assert cfg.raw["kernels"]["eta"]["value"] == 0.25


def test_override_syntax():
    with pytest.raises(ConfigError):
        apply_override({}, "no-equals")
    with pytest.raises(ConfigError):
        apply_override({}, "a..b=1")
    raw = apply_override({}, "a.b=[1, 2]")
    assert raw == {"a": {"b": [1, 2]}}


def test_kernel_entry_replaces_default_wholesale():
    cfg = load_config(text=MINIMAL + "kernels:\n  f0: {kind: constant, value: 0.1}\n")
    assert cfg.kernels.f0.kind == "constant"
    assert cfg.kernels.f0.parameters == {"value": 0.1}


def test_default_checkpoints_are_grid_nodes():
    cfg = load_config(text=MINIMAL)
    cps = cfg.mc_checkpoints()
    assert len(cps) == 5 and cps[-1] == cfg.grid.t_final
    for t in cps:
        cfg.grid.time_index(t)


def test_tabulated_path_relative_to_config(tmp_path):
    (tmp_path / "gamma.csv").write_text("x1,v1,value\n-4,-1,0.2\n-4,1,0.2\n4,-1,0.2\n4,1,0.2\n")
    (tmp_path / "s.yaml").write_text(MINIMAL + "kernels:\n  gamma: {kind: tabulated, path: gamma.csv}\n")
    cfg = load_config(tmp_path / "s.yaml")
    vals = cfg.kernels.gamma(0.0, cfg.grid.x_mesh(), cfg.grid.v_mesh())
    assert np.allclose(vals, 0.2)


def test_missing_file():
    with pytest.raises(ConfigError):
        load_config("/nonexistent/scenario.yaml")
