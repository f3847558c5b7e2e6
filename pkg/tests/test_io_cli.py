import os

import numpy as np
import pytest

from qvtree import cli, render
from qvtree.gridworld import build_model, bundled_map, parse_map
from qvtree.io import (CacheMismatch, ConfigError, cache_key, parse_config_text, read_alpha_set,
                       settings_from_mapping, write_alpha_set)
from qvtree.model import AlphaSet, point_belief
from qvtree.solvers import SolverConfig

FAST = ["--pbvi-target-size", "16", "--pbvi-iterations", "30"]


def test_alpha_cache_round_trip(tmp_path):
    m = build_model(bundled_map())
    key = cache_key(m, SolverConfig())
    s = AlphaSet(np.random.default_rng(0).normal(size=(7, m.num_states)), np.arange(7) % 9)
    path = tmp_path / "x.alpha"
    write_alpha_set(path, s, key)
    back = read_alpha_set(path, key)
    np.testing.assert_array_equal(back.vectors, s.vectors)
    np.testing.assert_array_equal(back.actions, s.actions)
    other = cache_key(m, SolverConfig(epsilon=1e-5))
    with pytest.raises(CacheMismatch):
        read_alpha_set(path, other)
    path.write_bytes(path.read_bytes()[:-3])
    with pytest.raises(CacheMismatch):
        read_alpha_set(path, key)


def test_config_parsing():
    raw = parse_config_text("# comment\nepisodes = 12\ntime-budget-ms = 250  # inline\nplanners = qvts, mdp\n")
    s = settings_from_mapping(raw)
    assert s["episodes"] == 12
    assert s["qvts"].time_budget_ms == 250.0
    assert s["planners"] == ("qvts", "mdp")
    with pytest.raises(ConfigError):
        settings_from_mapping({"bogus": "1"})
    with pytest.raises(ConfigError):
        settings_from_mapping({"planners": "astar,dfs"})
    with pytest.raises(ConfigError):
        parse_config_text("no equals sign")


def test_render_overlay_rules():
    g = bundled_map()
    m = build_model(g)
    spec = render.RenderSpec(cell_size=1, markers=False)
    img = render.render_raster(g, m.initial_belief, spec=spec)
    free = img.reshape(-1, 3)[g.free_cells()]
    assert np.all(free == free[0])
    b = point_belief(g.num_cells, 7)
    colors = render.cell_colors(g, b, spec)
    assert np.array_equal(colors[7], render.BELIEF.astype(np.uint8))
    assert np.all(np.delete(colors, 7, axis=0) == 255)
    with pytest.raises(ValueError):
        render.RenderSpec(cell_size=0)


def test_ppm_round_trip(tmp_path):
    g = parse_map("#.G\n...")
    img = render.render_raster(g, None, [3, 4, 2], 3, render.RenderSpec(cell_size=5))
    render.write_ppm(tmp_path / "a.ppm", img)
    np.testing.assert_array_equal(render.read_ppm(tmp_path / "a.ppm"), img)
    svg = render.render_svg(g, None, [3, 4, 2], 3, render.RenderSpec(cell_size=5, fmt="svg"))
    assert svg.startswith("<svg") and "<polyline" in svg


def test_cli_solve_then_cache_hit(tmp_path, capsys):
    args = ["solve", "--map", "builtin:five_by_five", "--cache-dir", str(tmp_path / "c")] + FAST
    assert cli.main(args) == cli.EXIT_OK
    out = capsys.readouterr().out
    assert "FIB sweeps" in out
    assert len(os.listdir(tmp_path / "c")) == 4
    up = float(out.split("V_FIB(b0) = ")[1].split()[0])
    lo = float(out.split("V_PBVI(b0) = ")[1].split()[0])
    assert up >= lo
    stamps = {p: os.path.getmtime(tmp_path / "c" / p) for p in os.listdir(tmp_path / "c")}
    assert cli.main(args) == cli.EXIT_OK
    assert "cache hit" in capsys.readouterr().out
    assert stamps == {p: os.path.getmtime(tmp_path / "c" / p) for p in os.listdir(tmp_path / "c")}


def test_cli_error_codes(tmp_path, capsys):
    bad = tmp_path / "bad.txt"
    bad.write_text("....\n....\n")
    assert cli.main(["solve", "--map", str(bad)]) == cli.EXIT_INPUT
    assert "MissingGoal" in capsys.readouterr().err
    code = cli.main(["simulate", "--map", "builtin:five_by_five", "--cache-dir", str(tmp_path / "none"),
                     "--no-solve", "--planners", "qvts"])
    assert code == cli.EXIT_MISSING
    code = cli.main(["solve", "--map", "builtin:five_by_five", "--cache-dir", str(tmp_path / "c"),
                     "--max-iterations", "2"] + FAST)
    assert code == cli.EXIT_NOT_CONVERGED
    # partial output is still written
    assert len(os.listdir(tmp_path / "c")) == 4


def test_cli_config_file_and_flag_override(tmp_path, capsys):
    conf = tmp_path / "run.conf"
    conf.write_text(f"map = builtin:five_by_five\nepisodes = 5\nplanners = astar\noutput_dir = {tmp_path / 'o'}\n")
    assert cli.main(["simulate", "--config", str(conf), "--episodes", "2"]) == cli.EXIT_OK
    lines = (tmp_path / "o" / "episodes.csv").read_text().splitlines()
    assert len(lines) == 1 + 2


def test_cli_compare_and_render(tmp_path, capsys):
    out = tmp_path / "o"
    args = ["compare", "--map", "builtin:five_by_five", "--cache-dir", str(tmp_path / "c"), "--episodes", "2",
            "--max-expansions", "10", "--output-dir", str(out)] + FAST
    assert cli.main(args) == cli.EXIT_OK
    table = capsys.readouterr().out
    assert all(name in table for name in ("astar", "mdp", "qvts"))
    summary = (out / "summary.csv").read_text().splitlines()
    assert len(summary) == 4
    imgs = tmp_path / "img"
    render_args = ["render", "--map", "builtin:five_by_five", "--episode", str(out / "episode_qvts_0.csv"),
                   "--steps", "0", "--output-dir", str(imgs), "--cell-size", "4"]
    assert cli.main(render_args) == cli.EXIT_OK
    first = (imgs / "path.ppm").read_bytes()
    step0 = render.read_ppm(imgs / "step_0000.ppm")
    assert cli.main(render_args) == cli.EXIT_OK
    assert (imgs / "path.ppm").read_bytes() == first
    # uniform prior at step 0: every free cell centre shares one overlay colour
    g = bundled_map()
    centres = {tuple(step0[r * 4 + 1, c * 4]) for r in range(5) for c in range(5) if (r * 5 + c) != g.goal}
    assert len(centres) <= 2  # overlay colour, plus the start-marker cell
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n")
    assert cli.main(["render", "--map", "builtin:five_by_five", "--episode", str(bad)]) == cli.EXIT_INPUT
