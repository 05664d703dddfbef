import pytest

from demoforge.pipeline import cmd_correspond, load_run_config
from demoforge.toyscene import write_scene


@pytest.fixture(scope="session")
def toy_scene(tmp_path_factory):
    """Bundled scene on disk with correspondence results, shared read-only.

    Tests that generate datasets must write them to their own --out dirs.
    """
    root = tmp_path_factory.mktemp("scene")
    write_scene(str(root), n_meshes=3, seed=7, n_points=1024, resolution=128)
    cfg = load_run_config(str(root / "run_config.json"), command="correspond")
    cmd_correspond(cfg)
    return root
