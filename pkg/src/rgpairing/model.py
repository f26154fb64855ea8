"""Model definitions shared by every other module.

A ``PairingModel`` is the static parameter set of the reduced BCS problem:
single-particle levels xi_alpha, per-level pair degeneracies d_alpha = 2 s_alpha,
the number of pairs M, the coupling g > 0 and the interaction kind
("rational" for the standard 1/(x-y) kernels, "trig" for cot(x-y) kernels).
This module owns validation and (de)serialization only; all numerics live
downstream.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

__all__ = [
    "PairingModel",
    "RootSet",
    "SpectrumResult",
    "ValidationReport",
    "validate",
    "merge_degenerate",
    "from_config",
    "to_config",
    "load_config",
    "dump_config",
]

KINDS = ("rational", "trig")

# Relative gap below which two levels are considered accidentally duplicated.
# The rational kernels contain 1/(xi_i - xi_j); levels this close must be
# merged into a degeneracy instead.
NEAR_DUPLICATE_RTOL = 1e-12


@dataclass(frozen=True)
class PairingModel:
    """Immutable parameter set of a pairing model.

    levels are stored sorted ascending; callers address levels by index
    into that order.
    """

    levels: tuple[float, ...]
    degeneracies: tuple[int, ...]
    pairs: int
    coupling: float
    kind: str = "rational"

    def __init__(
        self,
        levels: Sequence[float],
        degeneracies: Sequence[int] | None = None,
        pairs: int = 0,
        coupling: float = 1.0,
        kind: str = "rational",
    ):
        lv = tuple(float(x) for x in levels)
        if degeneracies is None:
            dg = (1,) * len(lv)
        else:
            dg = tuple(int(d) for d in degeneracies)
        order = sorted(range(len(lv)), key=lambda a: lv[a])
        object.__setattr__(self, "levels", tuple(lv[a] for a in order))
        object.__setattr__(self, "degeneracies", tuple(dg[a] for a in order) if len(dg) == len(lv) else dg)
        object.__setattr__(self, "pairs", int(pairs))
        object.__setattr__(self, "coupling", float(coupling))
        object.__setattr__(self, "kind", str(kind))

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    @property
    def capacity(self) -> int:
        """Maximum number of pairs the level set can hold (sum of d_alpha)."""
        return sum(self.degeneracies)

    @property
    def level_scale(self) -> float:
        """Magnitude used for relative comparisons between levels."""
        if not self.levels:
            return 1.0
        re = [complex(x).real for x in self.levels]
        span = max(re) - min(re)
        return max(1.0, max(abs(x) for x in self.levels), span)

    @property
    def all_spin_half(self) -> bool:
        return all(d == 1 for d in self.degeneracies)

    def _copy(self, **kw) -> "PairingModel":
        # field-for-field copy that skips __init__ (deformed models carry
        # complex levels the validating constructor would refuse)
        m = object.__new__(PairingModel)
        for name in ("levels", "degeneracies", "pairs", "coupling", "kind"):
            object.__setattr__(m, name, kw.get(name, getattr(self, name)))
        return m

    def with_coupling(self, g: float) -> "PairingModel":
        return self._copy(coupling=float(g))

    def with_levels(self, levels: Sequence[float] | Sequence[complex]) -> "PairingModel":
        return self._copy(levels=tuple(levels))

    def with_pairs(self, pairs: int) -> "PairingModel":
        return self._copy(pairs=int(pairs))


@dataclass(frozen=True)
class RootSet:
    """Richardson roots at one value of the coupling.

    residual is max_i |r_i| of the Bethe-equation residual; meta carries
    continuation diagnostics (newton iteration counts, schedule length,
    whether level deformation was needed).
    """

    roots: tuple[complex, ...]
    g: float
    residual: float
    conjugation_closed: bool
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def energy(self) -> complex:
        return sum(self.roots)


@dataclass(frozen=True)
class SpectrumResult:
    energy: float
    imag_energy: float
    gaudin_eigenvalues: tuple[float, ...]


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    violations: tuple[str, ...] = ()

    def __bool__(self) -> bool:
        return self.ok


def validate(model: PairingModel) -> ValidationReport:
    """Check every model invariant; reports, never raises."""
    bad: list[str] = []
    n = model.n_levels
    if n == 0:
        bad.append("empty level list")
    if len(model.degeneracies) != n:
        bad.append("degeneracies length %d != levels length %d" % (len(model.degeneracies), n))
    if any(d < 1 for d in model.degeneracies):
        bad.append("degeneracies must be positive integers")
    if any(not math.isfinite(x) for x in model.levels):
        bad.append("non-finite level value")
    scale = model.level_scale
    for a in range(n - 1):
        gap = model.levels[a + 1] - model.levels[a]
        if gap <= 0.0:
            bad.append("duplicate level at index %d (xi=%g); merge duplicates into degeneracies" % (a, model.levels[a]))
        elif gap < NEAR_DUPLICATE_RTOL * scale:
            bad.append(
                "levels %d and %d differ by %g (< %g relative); merge them into one level with degeneracy %d"
                % (a, a + 1, gap, NEAR_DUPLICATE_RTOL * scale, model.degeneracies[a] + model.degeneracies[a + 1])
            )
    if model.pairs < 0:
        bad.append("pairs must be >= 0")
    if len(model.degeneracies) == n and model.pairs > model.capacity:
        bad.append("too many pairs: M=%d exceeds capacity sum(d)=%d" % (model.pairs, model.capacity))
    if not math.isfinite(model.coupling) or model.coupling <= 0.0:
        bad.append("coupling must be a positive real number")
    if model.kind not in KINDS:
        bad.append("kind must be one of %s" % (KINDS,))
    if model.kind == "trig" and n > 0:
        span = max(model.levels) - min(model.levels)
        if span >= math.pi:
            bad.append("trig levels must fit inside one open period strip of width pi (span=%g)" % span)
    return ValidationReport(ok=not bad, violations=tuple(bad))


def merge_degenerate(levels_with_duplicates: Iterable[float]) -> tuple[tuple[float, ...], tuple[int, ...]]:
    """Collapse duplicated level values into degeneracy counts.

    Values closer than the near-duplicate threshold are treated as one level
    (represented by their mean) so that the merged list always validates.
    Returns (levels, degeneracies) with sum(degeneracies) == len(input).
    """
    vals = sorted(float(x) for x in levels_with_duplicates)
    if not vals:
        return (), ()
    scale = max(1.0, max(abs(v) for v in vals), vals[-1] - vals[0])
    tol = NEAR_DUPLICATE_RTOL * scale
    groups: list[list[float]] = [[vals[0]]]
    for v in vals[1:]:
        if v - groups[-1][-1] < tol:
            groups[-1].append(v)
        else:
            groups.append([v])
    levels = tuple(sum(grp) / len(grp) for grp in groups)
    degs = tuple(len(grp) for grp in groups)
    return levels, degs


def capacity_configs(degeneracies: Sequence[int], pairs: int) -> list[tuple[int, ...]]:
    """All pair-count tuples (m_1..m_N) with 0 <= m_a <= d_a and sum = pairs.

    Enumerated with earlier levels filled first (descending lexicographic);
    for d = 1 this is the order of itertools.combinations over occupied
    site indices. Shared by the oracle basis and the solver's state labels
    so their orderings always agree.
    """
    degs = tuple(int(d) for d in degeneracies)
    n = len(degs)
    tail_cap = [0] * (n + 1)
    for a in range(n - 1, -1, -1):
        tail_cap[a] = tail_cap[a + 1] + degs[a]
    out: list[tuple[int, ...]] = []
    cfg = [0] * n

    def rec(a: int, left: int) -> None:
        if a == n:
            if left == 0:
                out.append(tuple(cfg))
            return
        hi = min(degs[a], left)
        lo = max(0, left - tail_cap[a + 1])
        for m in range(hi, lo - 1, -1):
            cfg[a] = m
            rec(a + 1, left - m)
        cfg[a] = 0

    rec(0, pairs)
    return out


# --- config round trip -------------------------------------------------

def from_config(cfg: dict) -> PairingModel:
    """Build a model from the JSON config schema used by the CLI.

    Required keys: levels, pairs, coupling. Optional: degeneracies
    (default all ones), kind (default rational; "trigonometric" accepted
    as an alias).
    """
    levels = cfg["levels"]
    degs = cfg.get("degeneracies")
    kind = cfg.get("kind", "rational")
    if kind == "trigonometric":
        kind = "trig"
    return PairingModel(
        levels=levels,
        degeneracies=degs,
        pairs=cfg["pairs"],
        coupling=cfg["coupling"],
        kind=kind,
    )


def to_config(model: PairingModel) -> dict:
    return {
        "levels": list(model.levels),
        "degeneracies": list(model.degeneracies),
        "pairs": model.pairs,
        "coupling": model.coupling,
        "kind": model.kind,
    }


def load_config(path: str) -> dict:
    with open(path, "r") as fh:
        return json.load(fh)


def dump_config(model: PairingModel, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(to_config(model), fh, indent=2, sort_keys=True)
        fh.write("\n")
