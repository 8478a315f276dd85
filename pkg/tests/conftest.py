import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from tcfree.scenefile import load_bundled_scene, parse_scene_text


@pytest.fixture(scope="session")
def pendulum_scene():
    return load_bundled_scene("pendulum_rail")


@pytest.fixture(scope="session")
def flipper_scene():
    return load_bundled_scene("flippers")


EMPTY_SCENE = """
name: empty
joints:
  - {name: slide, kind: prismatic, limits: [-1.0, 1.0]}
  - {name: turn, kind: revolute, limits: [-2.0, 2.0]}
bodies: []
"""

# one small moving box, one wall; obstacle well away from the origin
TOY_SCENE = """
name: toy
joints:
  - name: spin
    kind: revolute
    limits: [-2.2, 2.2]
    child: arm
  - name: slide
    kind: prismatic
    limits: [-0.5, 0.5]
    parent: world
    origin: {xyz: [0, 0, 0], rpy: [0, 1.5707963267948966, 0]}
    child: cart
bodies:
  - {name: paddle, link: arm, kind: box, center: [0.5, 0, 0], size: [0.3, 0.1, 0.1]}
  - {name: cart_box, link: cart, kind: box, center: [0, 0.75, 0], size: [0.2, 0.2, 0.2]}
"""


@pytest.fixture(scope="session")
def empty_scene():
    return parse_scene_text(EMPTY_SCENE)


@pytest.fixture(scope="session")
def toy_scene():
    return parse_scene_text(TOY_SCENE)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
