"""Shared builders for tests."""

import numpy as np

from gne_mesh.engine import Setup, StepSchedule
from gne_mesh.game import CallableCost, GameSpec, zero_constraint
from gne_mesh.network import build_ring, mixing_matrix
from gne_mesh.trigger import TriggerSchedule


def lattice_setup(compressor):
    """Always-transmit run whose states stay on the 2^-40 lattice for 15 rounds."""
    def own(c):
        return CallableCost(lambda x, xb: float((x[0] - c) ** 2), d_own=lambda x, xb: 2.0 * (x - c), d_agg=lambda x, xb: 0.0 * x)

    game = GameSpec([own(c) for c in (1.0, 3.0, -2.0, 5.0, 0.0)], zero_constraint(1), np.full((5, 1), -8.0), np.full((5, 1), 8.0))
    return Setup(
        game=game,
        mixing=mixing_matrix(build_ring(5), 1.0),
        # dyadic constant steps keep every state on the 2^-40 lattice for 15 rounds
        schedule=StepSchedule(0.0, 0.0, 1, eta_scale=0.25, gamma_scale=0.125),
        trigger=TriggerSchedule.uniform(5, 0.0, 0.5),
        compressor=compressor,
        lambda_cap=np.zeros(5),
        horizon=15,
        force=True,
        x0=np.array([[4.0], [-3.0], [7.0], [0.0], [2.0]]),
    )
