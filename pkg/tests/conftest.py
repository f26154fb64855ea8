"""Shared helpers for the test suite.

Every random quantity in the suite flows through an explicitly seeded
generator so that repeated runs execute identical arithmetic. Helpers
reject level draws that sit too close together: the determinant and
continuation machinery is only contracted for well separated levels,
and near-coincident draws would probe float noise instead of the
formulas under test.
"""

from __future__ import annotations

import numpy as np
import pytest

from rgpairing.model import PairingModel


def separated_levels(rng: np.random.Generator, n: int, lo: float = 0.0,
                     hi: float = 2.0, min_gap: float = 0.05) -> list[float]:
    """n sorted levels in [lo, hi] whose pairwise gaps are all >= min_gap."""
    if n == 1:
        return [float(rng.uniform(lo, hi))]
    while True:
        draw = np.sort(rng.uniform(lo, hi, size=n))
        if float(np.diff(draw).min()) >= min_gap:
            return [float(x) for x in draw]


def random_model(rng: np.random.Generator, n: int, m: int, g: float,
                 min_gap: float = 0.05) -> PairingModel:
    """Spin-half rational model with well separated random levels."""
    return PairingModel(levels=separated_levels(rng, n, min_gap=min_gap),
                        pairs=m, coupling=g)


def offshell_points(rng: np.random.Generator, model: PairingModel,
                    count: int, spread: float = 0.6) -> np.ndarray:
    """count complex points of size model.pairs, kept away from the levels.

    Points are drawn around the level window with a guaranteed imaginary
    offset so no derivative stencil can straddle a pole.
    """
    lo, hi = min(model.levels), max(model.levels)
    out = np.empty((count, model.pairs), dtype=complex)
    for k in range(count):
        re = rng.uniform(lo - spread, hi + spread, size=model.pairs)
        im = rng.uniform(0.15, spread, size=model.pairs)
        im *= np.where(rng.uniform(size=model.pairs) < 0.5, -1.0, 1.0)
        out[k] = re + 1j * im
    return out


@pytest.fixture()
def two_level_model() -> PairingModel:
    """The fully worked two-level, one-pair regression instance."""
    return PairingModel(levels=[0.0, 1.0], pairs=1, coupling=0.5)
