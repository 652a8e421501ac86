import sys
from pathlib import Path

import pytest

from sraf.config import config_from_text
from sraf.microsim import Microsim, SimParams, parse_world

FIXTURES = Path(__file__).parent / "fixtures"
PYCLIENT = FIXTURES / "pyclient.py"

# Minimal straight-road world used by unit tests that do not need the
# bundled towns: 60 m lane, route every 5 m.
STRAIGHT_MAP = """\
sraf-map 1
lane L1 3.5 -10 0 70 0
route r1 0 0 5 0 10 0 15 0 20 0 25 0 30 0 35 0 40 0 45 0 50 0 55 0 60 0
"""

# Tiny config for protocol robustness tests: short budget, short deadline.
PROTOCOL_CFG = """\
map = town_desk_2
routes = r1
agents = {agents}
seed = 5
region = green_test
power.provider = constant
sim.tick_budget = 200
sim.blocked_after_s = 4
session.deadline_s = 0.4
"""


@pytest.fixture(scope="session")
def straight_world():
    return parse_world(STRAIGHT_MAP, name="straight")


@pytest.fixture()
def straight_sim(straight_world):
    return Microsim(straight_world, straight_world.route("r1"), SimParams())


def protocol_config(agents: str):
    return config_from_text(PROTOCOL_CFG.format(agents=agents))


def client_cmd(mode: str) -> str:
    return f'cmd:{sys.executable} {PYCLIENT} --mode {mode}'
