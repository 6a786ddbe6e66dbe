import runpy
from pathlib import Path

import pytest

SCRIPTS = sorted((Path(__file__).parent.parent / "tutorials").glob("*.py"))


@pytest.mark.filterwarnings("ignore::DeprecationWarning")
@pytest.mark.parametrize("script", SCRIPTS, ids=lambda p: p.stem)
def test_tutorial_runs(script, capsys):
    if "pretrained" in script.stem:
        pytest.importorskip("torch")
        pytest.importorskip("torchvision")
    runpy.run_path(str(script), run_name="__main__")
    assert capsys.readouterr().out
