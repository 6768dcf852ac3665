"""Hand-built instances used by tests, suites and the CLI."""
from __future__ import annotations

import numpy as np

from ..abstraction import Abstraction
from ..mdp import GroundMDP

# ground states 1..4 are stored at indices 0..3
COUNTEREXAMPLE_LABELS = ("1", "2", "3", "4")
COUNTEREXAMPLE_BLOCKS = ("A", "B", "C")


def counterexample_fixture() -> tuple[GroundMDP, Abstraction]:
    """Four-state, one-action chain whose abstract outcomes are dependent.

    Blocks A = {1, 2}, B = {3}, C = {4}. State 1 moves to 3 or 4 with
    probability 0.6 / 0.4, state 2 with 0.4 / 0.6; 3 returns to 1 and 4 to 2.
    Rewards are zero and the chain starts in state 1.
    """
    t = np.zeros((4, 1, 4))
    t[0, 0, 2], t[0, 0, 3] = 0.6, 0.4
    t[1, 0, 2], t[1, 0, 3] = 0.4, 0.6
    t[2, 0, 0] = 1.0
    t[3, 0, 1] = 1.0
    mdp = GroundMDP(t, np.zeros((4, 1)), r_max=1.0, start_state=0)
    return mdp, Abstraction(np.array([0, 0, 1, 2]), 3)


def fixture_document() -> dict:
    mdp, phi = counterexample_fixture()
    return {
        "state_labels": list(COUNTEREXAMPLE_LABELS),
        "block_labels": list(COUNTEREXAMPLE_BLOCKS),
        "mdp": mdp.to_dict(),
        "abstraction": phi.to_dict(),
    }


FIXTURES = {"counterexample": counterexample_fixture}
