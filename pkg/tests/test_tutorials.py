import runpy
from pathlib import Path

import pytest

TUTORIALS = Path(__file__).resolve().parent.parent / "tutorials"


@pytest.mark.parametrize("name", ["01_formulas.py", "02_grid_planning.py", "04_milp_and_mps.py"])
def test_tutorial_runs(name, capsys):
    runpy.run_path(str(TUTORIALS / name), run_name="__main__")
    assert capsys.readouterr().out
