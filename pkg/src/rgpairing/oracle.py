"""Brute-force ground truth on the fixed-M sector.

Everything downstream (solver roots, determinant correlators, six-vertex
expansions) is checked against dense matrices built here: the pairing
Hamiltonian, the commuting one-body operators, raising-operator product
states and plain expectation values. Nothing in this module uses a
determinant formula; that is the point.

Basis convention: a configuration is the tuple (m_1, ..., m_N) of pair
counts per level (m_alpha <= d_alpha); configurations are enumerated so
that filling earlier levels comes first (descending lexicographic in the
m-tuples). For spin-1/2 that is exactly the order of
itertools.combinations over occupied site indices, site 1 leftmost.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import PairingModel, capacity_configs

__all__ = [
    "SectorBasis",
    "OperatorMatrix",
    "sector_basis",
    "hamiltonian_matrix",
    "gaudin_matrix",
    "sigma_plus_state",
    "expectation",
    "ed_spectrum",
    "hi_action_offshell",
    "number_op",
    "hop_op",
    "pair_amp_op",
    "sigma_dot_op",
    "lowering_matrix",
    "raising_matrix",
]

SECTOR_DIM_CAP = 200_000


@dataclass(frozen=True)
class SectorBasis:
    local_dims: tuple[int, ...]
    pairs: int
    configs: tuple[tuple[int, ...], ...]
    index: dict = field(compare=False, repr=False)

    @property
    def dim(self) -> int:
        return len(self.configs)


@dataclass(frozen=True)
class OperatorMatrix:
    matrix: np.ndarray
    basis: SectorBasis
    hermitian: bool = True


def sector_basis(model: PairingModel, pairs: int | None = None) -> SectorBasis:
    m = model.pairs if pairs is None else int(pairs)
    degs = model.degeneracies
    if not (0 <= m <= sum(degs)):
        raise ValueError("pair number %d outside sector range [0, %d]" % (m, sum(degs)))
    configs = capacity_configs(degs, m)
    if len(configs) > SECTOR_DIM_CAP:
        raise ValueError("sector dimension %d exceeds cap %d" % (len(configs), SECTOR_DIM_CAP))
    return SectorBasis(
        local_dims=tuple(d + 1 for d in degs),
        pairs=m,
        configs=tuple(configs),
        index={c: k for k, c in enumerate(configs)},
    )


def lowering_matrix(model: PairingModel, level: int, pairs: int,
                    basis_hi: SectorBasis | None = None,
                    basis_lo: SectorBasis | None = None) -> np.ndarray:
    """b_level as a (dim_{M-1} x dim_M) real matrix.

    Ladder amplitude for a level of capacity d holding m pairs:
    b |m> = sqrt((d - m + 1) m) |m-1>, the symmetric-sector normalization
    that makes [b, b^+] = 1 - 2 m_hat / d ... for d=1 this is the hard-core
    boson with amplitude 1.
    """
    bh = basis_hi or sector_basis(model, pairs)
    bl = basis_lo or sector_basis(model, pairs - 1)
    d = model.degeneracies[level]
    mat = np.zeros((bl.dim, bh.dim))
    for k, cfg in enumerate(bh.configs):
        m = cfg[level]
        if m == 0:
            continue
        dst = list(cfg)
        dst[level] = m - 1
        amp = math.sqrt((d - m + 1) * m)
        mat[bl.index[tuple(dst)], k] = amp
    return mat


def raising_matrix(model: PairingModel, level: int, pairs: int,
                   basis_lo: SectorBasis | None = None,
                   basis_hi: SectorBasis | None = None) -> np.ndarray:
    """b^+_level as a (dim_{M} x dim_{M-1}) real matrix (transpose of lowering)."""
    return lowering_matrix(model, level, pairs, basis_hi, basis_lo).T


def number_op(model: PairingModel, level: int, basis: SectorBasis | None = None) -> OperatorMatrix:
    b = basis or sector_basis(model)
    diag = np.array([cfg[level] for cfg in b.configs], dtype=float)
    return OperatorMatrix(np.diag(diag), b)


def hop_op(model: PairingModel, i: int, j: int, basis: SectorBasis | None = None) -> OperatorMatrix:
    """b_i^+ b_j on the M sector (i may equal j)."""
    b = basis or sector_basis(model)
    if i == j:
        # diagonal in this basis only for d=1; assemble explicitly in general
        lo = sector_basis(model, b.pairs - 1) if b.pairs > 0 else None
        if lo is None:
            return OperatorMatrix(np.zeros((b.dim, b.dim)), b)
        low = lowering_matrix(model, j, b.pairs, b, lo)
        return OperatorMatrix(low.T @ low, b)
    lo = sector_basis(model, b.pairs - 1)
    down = lowering_matrix(model, j, b.pairs, b, lo)
    up = raising_matrix(model, i, b.pairs, lo, b)
    return OperatorMatrix(up @ down, b, hermitian=False)


def _total_lowering(model: PairingModel, pairs: int, bh: SectorBasis, bl: SectorBasis) -> np.ndarray:
    tot = np.zeros((bl.dim, bh.dim))
    for a in range(model.n_levels):
        tot += lowering_matrix(model, a, pairs, bh, bl)
    return tot


def pair_amp_op(model: PairingModel, basis: SectorBasis | None = None) -> OperatorMatrix:
    """S^+ S^- on the M sector."""
    b = basis or sector_basis(model)
    if b.pairs == 0:
        return OperatorMatrix(np.zeros((1, 1)), b)
    bl = sector_basis(model, b.pairs - 1)
    sm = _total_lowering(model, b.pairs, b, bl)
    return OperatorMatrix(sm.T @ sm, b)


def hamiltonian_matrix(model: PairingModel) -> OperatorMatrix:
    """Dense pairing Hamiltonian on the M sector.

    rational: H = sum_a xi_a m_a - g S^+ S^-  (pair-count normalization of
    the level term; eigenvalues are plain root sums).

    trig: the level-weighted combination sum_i xi_i H_i of the commuting
    family, assembled here independently as its explicit two-body form

        H = -(1/g) sum_i xi_i n_i
            + sum_{i<j} (xi_i - xi_j) [ (b_i^+ b_j + b_j^+ b_i)/sin(xi_i - xi_j)
                            + (n_i n_j + (1-n_i)(1-n_j))/tan(xi_i - xi_j) ]

    whose eigenvalue on a Bethe state is sum_i xi_i E_i (well defined under
    shifting any root by a period, unlike a bare root sum). Trig requires
    spin-1/2 levels.
    """
    b = sector_basis(model)
    if model.kind == "rational":
        diag = np.array([sum(x * m for x, m in zip(model.levels, cfg)) for cfg in b.configs])
        h = np.diag(diag) - model.coupling * pair_amp_op(model, b).matrix
        return OperatorMatrix(h, b)
    if not model.all_spin_half:
        raise ValueError("trig hamiltonian_matrix needs spin-1/2 levels")
    xi = model.levels
    occ = [np.array([cfg[i] for cfg in b.configs], dtype=float) for i in range(model.n_levels)]
    h = np.diag(sum((-xi[i] / model.coupling) * occ[i] for i in range(model.n_levels)))
    for i in range(model.n_levels):
        for j in range(i + 1, model.n_levels):
            dx = xi[i] - xi[j]
            hop = hop_op(model, i, j, b).matrix
            h = h + (dx / math.sin(dx)) * (hop + hop.T)
            h = h + (dx / math.tan(dx)) * np.diag(occ[i] * occ[j] + (1 - occ[i]) * (1 - occ[j]))
    return OperatorMatrix(h, b)


def sigma_dot_op(model: PairingModel, i: int, j: int, basis: SectorBasis | None = None) -> OperatorMatrix:
    """(sigma_i . sigma_j) = 2(b_i^+ b_j + b_j^+ b_i) + (2n_i - 1)(2n_j - 1),
    spin-1/2 levels only."""
    if model.degeneracies[i] != 1 or model.degeneracies[j] != 1:
        raise ValueError("sigma_dot_op is defined for spin-1/2 levels")
    b = basis or sector_basis(model)
    ni = np.array([cfg[i] for cfg in b.configs], dtype=float)
    nj = np.array([cfg[j] for cfg in b.configs], dtype=float)
    out = np.diag((2 * ni - 1) * (2 * nj - 1))
    if i != j:
        hop = hop_op(model, i, j, b).matrix
        out = out + 2.0 * (hop + hop.T)
    else:
        out = np.eye(b.dim) * 3.0  # (sigma.sigma)=3 on a single spin-1/2
    return OperatorMatrix(out, b)


def gaudin_matrix(model: PairingModel, i: int, basis: SectorBasis | None = None) -> OperatorMatrix:
    """The i-th commuting one-body operator on the M sector.

    rational: H_i = -n_i/g + (1/2) sum_{l != i} (sigma_i . sigma_l)/(xi_i - xi_l)
    trig:     H_i = -n_i/g + sum_{l != i} [ (b_i^+ b_l + b_l^+ b_i)/sin(xi_i - xi_l)
                                 + (n_i n_l + (1-n_i)(1-n_l))/tan(xi_i - xi_l) ]
    Spin-1/2 levels only. The trig level-term coefficient is -1/g, the unique
    normalization for which solutions of this package's trig residual are
    exact common eigenvectors of the family (the halved-coupling variant
    pairs with a residual whose constant is 1/(2g) instead).
    """
    if not model.all_spin_half:
        raise ValueError("gaudin_matrix needs spin-1/2 levels")
    b = basis or sector_basis(model)
    xi = model.levels
    n_i = np.array([cfg[i] for cfg in b.configs], dtype=float)
    if model.kind == "rational":
        out = np.diag(-n_i / model.coupling)
        for l in range(model.n_levels):
            if l == i:
                continue
            out = out + 0.5 * sigma_dot_op(model, i, l, b).matrix / (xi[i] - xi[l])
    else:
        out = np.diag(-n_i / model.coupling)
        for l in range(model.n_levels):
            if l == i:
                continue
            n_l = np.array([cfg[l] for cfg in b.configs], dtype=float)
            hop = hop_op(model, i, l, b).matrix
            out = out + (hop + hop.T) / math.sin(xi[i] - xi[l])
            out = out + np.diag(n_i * n_l + (1 - n_i) * (1 - n_l)) / math.tan(xi[i] - xi[l])
    return OperatorMatrix(out, b)


def _raise_weights(model: PairingModel, t: complex) -> np.ndarray:
    xi = np.asarray(model.levels, dtype=complex)
    if model.kind == "rational":
        den = t - xi
    else:
        den = np.sin(np.asarray(t - xi, dtype=complex))
    small = np.abs(den) < 1e-13 * max(1.0, abs(t))
    if small.any():
        raise ValueError("raising-operator pole: t=%s collides with level(s) %s"
                         % (t, np.nonzero(small)[0].tolist()))
    return 1.0 / den


def sigma_plus_state(model: PairingModel, t_values) -> np.ndarray:
    """Apply the weighted raising operator for each t in turn to the vacuum.

    Returns the vector in the sector with M = len(t_values) pairs. Weights
    are 1/(t - xi_a) (rational) or 1/sin(t - xi_a) (trig).
    """
    t_values = list(t_values)
    if len(t_values) > model.capacity:
        raise ValueError("more raising operators than capacity")
    vec = np.ones(1, dtype=complex)
    b_lo = sector_basis(model, 0)
    for m, t in enumerate(t_values, start=1):
        b_hi = sector_basis(model, m)
        w = _raise_weights(model, t)
        nxt = np.zeros(b_hi.dim, dtype=complex)
        for a in range(model.n_levels):
            up = raising_matrix(model, a, m, b_lo, b_hi)
            nxt += w[a] * (up @ vec)
        vec, b_lo = nxt, b_hi
    return vec


def expectation(state: np.ndarray, op: OperatorMatrix | np.ndarray) -> complex:
    mat = op.matrix if isinstance(op, OperatorMatrix) else op
    nrm = np.vdot(state, state)
    if nrm == 0:
        raise ValueError("zero-norm state")
    return complex(np.vdot(state, mat @ state) / nrm)


def ed_spectrum(op: OperatorMatrix | np.ndarray) -> np.ndarray:
    mat = op.matrix if isinstance(op, OperatorMatrix) else op
    scale = np.linalg.norm(mat) or 1.0
    if np.linalg.norm(mat - mat.conj().T) > 1e-10 * scale:
        raise ValueError("ed_spectrum expects a Hermitian matrix")
    return np.linalg.eigvalsh(mat)


def _richardson_residual_value(model: PairingModel, t_values, j: int) -> complex:
    """f(t_j): the Bethe-equation residual at root j (rational kind)."""
    t = np.asarray(t_values, dtype=complex)
    xi = np.asarray(model.levels, dtype=complex)
    d = np.asarray(model.degeneracies, dtype=float)
    val = np.sum(d / (t[j] - xi)) + 1.0 / model.coupling
    for k in range(len(t)):
        if k != j:
            val -= 2.0 / (t[j] - t[k])
    return complex(val)


def hi_action_offshell(model: PairingModel, t_values, i: int) -> dict:
    """Check the off-shell action of the i-th commuting operator on a
    raising-product state:

        H_i |t> = E_i |t> - sum_j f(t_j) (t_j - xi_i)^{-1} b_i^+ |t(j)>

    with E_i = (1/2) sum_{a != i} 1/(xi_i - xi_a) + sum_j 1/(t_j - xi_i)
    and t(j) the root list with t_j removed. Works on- and off-shell;
    returns the per-term norms and the final residual.
    """
    if not model.all_spin_half or model.kind != "rational":
        raise ValueError("off-shell decomposition implemented for rational spin-1/2 models")
    t_values = list(t_values)
    m = len(t_values)
    xi = model.levels
    state = sigma_plus_state(model, t_values)
    lhs = gaudin_matrix(model, i, sector_basis(model, m)).matrix @ state

    e_i = 0.5 * sum(1.0 / (xi[i] - xi[a]) for a in range(model.n_levels) if a != i)
    e_i += sum(1.0 / (t - xi[i]) for t in t_values)
    rhs = e_i * state

    b_lo = sector_basis(model, m - 1) if m else None
    b_hi = sector_basis(model, m)
    up_i = raising_matrix(model, i, m, b_lo, b_hi) if m else None
    term_norms = []
    for j in range(m):
        f_j = _richardson_residual_value(model, t_values, j)
        rest = t_values[:j] + t_values[j + 1:]
        piece = f_j / (t_values[j] - xi[i]) * (up_i @ sigma_plus_state(model, rest))
        rhs = rhs - piece
        term_norms.append(float(np.linalg.norm(piece)))

    scale = max(1.0, float(np.linalg.norm(lhs)))
    resid = float(np.linalg.norm(lhs - rhs))
    return {
        "eigenvalue": complex(e_i),
        "residual": resid,
        "relative_residual": resid / scale,
        "correction_norms": term_norms,
        "ok": resid <= 1e-9 * scale,
    }
