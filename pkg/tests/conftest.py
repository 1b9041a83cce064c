import dataclasses
from pathlib import Path

import pytest

from dropctl.scenario import parse_scenario

REPO_ROOT = Path(__file__).resolve().parents[1]
DEFAULT_SCENARIO = REPO_ROOT / "scenarios" / "default_tanks.json"


@pytest.fixture(scope="session")
def default_scenario():
    return parse_scenario(DEFAULT_SCENARIO)


@pytest.fixture()
def small_scenario(default_scenario, tmp_path):
    """Default scenario shrunk to a 3-point grid and a 3-node network so CLI
    round trips stay fast; written to a temp file in canonical form."""
    from dropctl.scenario import canonical_dumps

    scn = dataclasses.replace(
        default_scenario,
        sweep=dataclasses.replace(default_scenario.sweep, grid_count=3),
        network=dataclasses.replace(
            default_scenario.network, node_count=3, link_success=(0.97,) * 3
        ),
        monte_carlo=dataclasses.replace(
            default_scenario.monte_carlo, trials=60, horizon=200, power_iterations=6
        ),
    )
    path = tmp_path / "small_scenario.json"
    path.write_text(canonical_dumps(scn), encoding="utf-8")
    return path
