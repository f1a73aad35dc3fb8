import pytest

from fleetopt.plot import history_svg, plot_history, read_history
from fleetopt.solution import ValidationError

HEADER = "generation,candidates,cached,threshold_admits,ensure_fires,rejected,budget_skipped,sims,sims_total,f_star,gen_best_sim,gen_best_pred\n"


def test_single_generation_has_one_tick(tmp_path):
    p = tmp_path / "h.csv"
    p.write_text(HEADER + "1,98,0,20,1,77,0,21,21,250000,251000,240000\n")
    svg = history_svg(read_history(p))
    assert svg.count('class="xtick"') == 1
    assert "<polyline" in svg


def test_nan_points_are_skipped(tmp_path):
    p = tmp_path / "h.csv"
    p.write_text(HEADER + "1,98,0,0,0,98,0,0,0,250000,nan,240000\n2,98,0,3,0,95,0,3,3,249000,249000,nan\n")
    svg = history_svg(read_history(p))
    assert svg.count('class="xtick"') == 2


def test_deterministic_output(tmp_path):
    p = tmp_path / "h.csv"
    p.write_text(HEADER + "1,98,0,20,1,77,0,21,21,250000,251000,240000\n2,98,0,10,1,87,0,11,32,249000,249000,245000\n")
    plot_history(p, tmp_path / "a.svg")
    plot_history(p, tmp_path / "b.svg")
    assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()


def test_empty_and_missing(tmp_path):
    p = tmp_path / "h.csv"
    p.write_text(HEADER)
    with pytest.raises(ValidationError):
        plot_history(p, tmp_path / "x.svg")
    assert not (tmp_path / "x.svg").exists()
    with pytest.raises(ValidationError):
        read_history(tmp_path / "none.csv")
