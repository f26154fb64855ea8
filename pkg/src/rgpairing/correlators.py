"""Determinant formulas for norms, scalar products, and correlators.

Everything here consumes a converged root set of the rational spin-1/2
model. The norm matrix is LU-factorized once and reused: occupations and
pair amplitudes are rank-one updates, the two-point functions rank-two
updates, so a full report costs O(M^2) linear solves instead of O(M^4)
determinant evaluations. Determinants are carried as (phase, log|det|)
pairs and recombined only in ratios, which keeps every published formula
usable at sizes where the raw determinant would overflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .model import PairingModel, RootSet

__all__ = [
    "CorrelatorError",
    "LogDet",
    "NormMatrix",
    "CorrelatorReport",
    "norm_matrix",
    "scalar_product",
    "rank_one_det",
    "occupation",
    "pair_transfer",
    "density_density",
    "spin_spin",
    "pairing_amplitude",
    "correlator_report",
]

# below this separation the 1/(t_k - t_l) prefactor is evaluated through a
# symmetric difference quotient instead of the raw antisymmetric product
NEAR_PAIR_TOL = 1e-8

_DUAL_ROUTE_TOL = 1e-10


class CorrelatorError(ValueError):
    """Raised for invalid inputs or a failed internal consistency check."""


@dataclass(frozen=True)
class LogDet:
    """Determinant as a unit phase and the log of the magnitude.

    value recombines the two and may overflow to inf for very large
    matrices; ratios of LogDets stay finite whenever the ratio does.
    """

    phase: complex
    log_abs: float

    @property
    def value(self) -> complex:
        if self.log_abs == -math.inf:
            return 0.0 + 0.0j
        return self.phase * math.exp(self.log_abs)

    @property
    def mantissa(self) -> complex:
        """Mantissa m with value = m * 10**exponent10 and |m| in [1, 10)."""
        if self.log_abs == -math.inf:
            return 0.0 + 0.0j
        return self.phase * 10.0 ** (self.log_abs / math.log(10.0) - self.exponent10)

    @property
    def exponent10(self) -> int:
        if self.log_abs == -math.inf:
            return 0
        return math.floor(self.log_abs / math.log(10.0))

    def ratio(self, other: "LogDet") -> complex:
        """self / other, formed in log space."""
        if other.log_abs == -math.inf:
            raise ZeroDivisionError("determinant ratio with singular denominator")
        if self.log_abs == -math.inf:
            return 0.0 + 0.0j
        return (self.phase / other.phase) * math.exp(self.log_abs - other.log_abs)


def _logdet_from_lu(lu: np.ndarray, piv: np.ndarray) -> LogDet:
    diag = np.diag(lu)
    if np.any(diag == 0):
        return LogDet(1.0 + 0.0j, -math.inf)
    swaps = int(np.sum(piv != np.arange(len(piv))))
    phase = complex(np.prod(diag / np.abs(diag))) * (-1.0) ** swaps
    return LogDet(phase, float(np.sum(np.log(np.abs(diag)))))


def _logdet(matrix: np.ndarray) -> LogDet:
    try:
        lu, piv = lu_factor(matrix, check_finite=False)
    except ValueError as exc:
        raise CorrelatorError(f"non-finite matrix entries: {exc}") from exc
    return _logdet_from_lu(lu, piv)


@dataclass
class NormMatrix:
    """Norm matrix of a Bethe state with its LU factorization attached."""

    entries: np.ndarray
    det: LogDet
    factorization: tuple

    @property
    def det_value(self) -> complex:
        return self.det.value

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """N^{-1} rhs via the stored factorization."""
        return lu_solve(self.factorization, rhs, check_finite=False)


@dataclass
class CorrelatorReport:
    """All single- and two-level averages of one eigenstate."""

    occupations: np.ndarray
    pair_transfer: np.ndarray
    density_density: np.ndarray
    spin_spin: np.ndarray
    pairing: float
    imag_leakage: float


def _require_rational_spin_half(model: PairingModel) -> None:
    if model.kind != "rational":
        raise CorrelatorError(
            "determinant correlators are implemented for the rational kind only")
    if not model.all_spin_half:
        raise CorrelatorError(
            "determinant correlators require all levels at unit capacity")


def _roots_array(roots) -> np.ndarray:
    if isinstance(roots, RootSet):
        roots = roots.roots
    return np.asarray(roots, dtype=complex)


def norm_matrix(model: PairingModel, roots) -> NormMatrix:
    """Richardson norm matrix: det equals the squared norm of the state.

    Diagonal: sum_a 1/(t_i-xi_a)^2 - sum_{k!=i} 2/(t_i-t_k)^2; off-diagonal
    2/(t_i-t_j)^2. Symmetric by construction.
    """
    _require_rational_spin_half(model)
    t = _roots_array(roots)
    m = len(t)
    if m == 0:
        raise CorrelatorError("empty root set has no norm matrix")
    scale = max(model.level_scale, 1e-300)
    xi = np.asarray(model.levels, dtype=complex)
    A = t[:, None] - xi[None, :]
    if np.min(np.abs(A)) < 1e-13 * scale:
        raise CorrelatorError("root coincides with a level")
    T = t[:, None] - t[None, :]
    off = ~np.eye(m, dtype=bool)
    if m > 1 and np.min(np.abs(T[off])) < 1e-13 * scale:
        raise CorrelatorError("coincident roots")
    N = np.zeros((m, m), dtype=complex)
    if m > 1:
        N[off] = 2.0 / T[off] ** 2
    np.fill_diagonal(N, (1.0 / A**2).sum(axis=1) - (N.sum(axis=1) - np.diag(N)))
    fact = lu_factor(N, check_finite=False)
    return NormMatrix(entries=N, det=_logdet_from_lu(*fact), factorization=fact)


def _bethe_residual_without(model: PairingModel, value: complex, t: np.ndarray,
                            skip: int) -> complex:
    """sum_a 1/(v-xi_a) - 2 sum_{k != skip} 1/(v-t_k) + 1/g at v=value."""
    xi = np.asarray(model.levels, dtype=complex)
    out = np.sum(1.0 / (value - xi)) + 1.0 / model.coupling
    for k in range(len(t)):
        if k != skip:
            out -= 2.0 / (value - t[k])
    return out


def scalar_product(model: PairingModel, lam, roots) -> complex:
    """Scalar product of an on-shell Bethe state with an off-shell one.

    lam holds the off-shell rapidities; the roots must satisfy the Bethe
    equations. Evaluated through the reduced-matrix form whose columns
    carry the off-shell residual, so no 0/0 arises as lam approaches the
    roots; the lam -> roots limit is the norm determinant.
    """
    _require_rational_spin_half(model)
    t = _roots_array(roots)
    lv = np.asarray(lam, dtype=complex)
    m = len(t)
    if len(lv) != m:
        raise CorrelatorError("rapidity count must match the number of pairs")
    scale = max(model.level_scale, 1e-300)
    xi = np.asarray(model.levels, dtype=complex)
    if np.min(np.abs(lv[:, None] - xi[None, :])) < 1e-12 * scale:
        raise CorrelatorError("rapidity collides with a level; use the "
                              "correlator operations for limiting cases")
    if np.min(np.abs(lv[:, None] - t[None, :])) < 1e-12 * scale:
        raise CorrelatorError("rapidity collides with a root; the coincident "
                              "limit is norm_matrix")
    if m > 1:
        pair = np.abs(lv[:, None] - lv[None, :])[~np.eye(m, dtype=bool)]
        if pair.min() < 1e-12 * scale:
            raise CorrelatorError("rapidities must be pairwise distinct")

    # prefactor prod_{i,j}(t_i-lam_j) / [prod_{i<j}(t_i-t_j) prod_{j<i}(lam_i-lam_j)]
    # assembled in log space, phases tracked separately
    phase = 1.0 + 0.0j
    log_abs = 0.0
    for z in (t[:, None] - lv[None, :]).ravel():
        phase *= z / abs(z)
        log_abs += math.log(abs(z))
    for i in range(m):
        for j in range(i + 1, m):
            z = t[i] - t[j]
            phase /= z / abs(z)
            log_abs -= math.log(abs(z))
            w = lv[j] - lv[i]
            phase /= w / abs(w)
            log_abs -= math.log(abs(w))
    M = np.zeros((m, m), dtype=complex)
    for i in range(m):
        for j in range(m):
            M[i, j] = _bethe_residual_without(model, lv[j], t, i) / (t[i] - lv[j]) ** 2
    dm = _logdet(M)
    return phase * dm.phase * math.exp(log_abs + dm.log_abs)


def rank_one_det(base: NormMatrix, column_factors, column_vector) -> complex:
    """det(N + a) for the rank-one update a_ij = c_j * phi_i.

    Uses the stored factorization: det N * (1 + sum_k c_k (N^{-1} phi)_k).
    A singular base falls back to summing direct column-replacement
    determinants.
    """
    c = np.asarray(column_factors, dtype=complex)
    phi = np.asarray(column_vector, dtype=complex)
    m = len(base.entries)
    if len(c) != m or len(phi) != m:
        raise CorrelatorError("update vectors must match the matrix size")
    if base.det.log_abs == -math.inf:
        total = 0.0 + 0.0j
        for k in range(m):
            rep = base.entries.copy()
            rep[:, k] = phi
            total += c[k] * _logdet(rep).value
        return total
    x = base.solve(phi)
    return base.det.value * (1.0 + np.sum(c * x))


def occupation(model: PairingModel, roots, level_index: int,
               norm: NormMatrix | None = None) -> float:
    """Average pair occupation of one level.

    Evaluated both as a determinant ratio (rank-one update of the norm) and
    as the quadratic form sum_ij (N^{-1})_ij phi_j; the two routes must
    agree to 1e-10 and their mean is returned.
    """
    _require_rational_spin_half(model)
    t = _roots_array(roots)
    _check_level(model, level_index)
    nm = norm if norm is not None else norm_matrix(model, t)
    return float(_occupation_c(model, t, level_index, nm).real)


def _check_level(model: PairingModel, index: int) -> None:
    if not 0 <= index < model.n_levels:
        raise CorrelatorError(f"level index {index} out of range")


def _check_dual_route(a: complex, b: complex, what: str) -> None:
    scale = max(1.0, abs(a), abs(b))
    if abs(a - b) > _DUAL_ROUTE_TOL * scale:
        raise CorrelatorError(
            f"{what}: determinant and quadratic-form routes disagree "
            f"({a:.15g} vs {b:.15g})")


def _pair_minor_sum(t: np.ndarray, x: np.ndarray, y: np.ndarray,
                    pref_k: np.ndarray, pref_l: np.ndarray) -> complex:
    """sum_{k<l} pref_k[k] pref_l[l] (x_k y_l - x_l y_k) / (t_k - t_l),
    antisymmetrized over the pair so both orderings are included.

    Near-degenerate pairs (conjugate roots at strong coupling) are routed
    through a symmetric difference quotient: the antisymmetry of the minor
    cancels the 1/(t_k - t_l) pole, so the limit is finite.
    """
    m = len(t)
    total = 0.0 + 0.0j
    lscale = max(np.max(np.abs(t)), 1.0)
    for k in range(m):
        for l in range(k + 1, m):
            dt = t[k] - t[l]
            if abs(dt) < NEAR_PAIR_TOL * lscale:
                quot = (x[k] * (y[l] - y[k]) - y[k] * (x[l] - x[k])) / dt
            else:
                quot = (x[k] * y[l] - x[l] * y[k]) / dt
            # k<->l swaps both prefactors and flips the minor and the pole
            total += pref_k[k] * pref_l[l] * quot
            total += pref_k[l] * pref_l[k] * quot
    return total


def _occupation_c(model: PairingModel, t: np.ndarray, level_index: int,
                  nm: NormMatrix) -> complex:
    phi = 1.0 / (t - model.levels[level_index]) ** 2
    quad = complex(np.sum(nm.solve(phi)))
    det_route = complex(_logdet(nm.entries + phi[:, None]).ratio(nm.det)) - 1.0
    _check_dual_route(quad, det_route, "occupation")
    return 0.5 * (quad + det_route)


def _pair_transfer_c(model: PairingModel, t: np.ndarray, i: int, j: int,
                     nm: NormMatrix) -> complex:
    xi_i = complex(model.levels[i])
    xi_j = complex(model.levels[j])
    y = nm.solve(1.0 / (t - xi_i) ** 2)
    x = nm.solve(1.0 / (t - xi_j) ** 2)
    c = (t - xi_i) / (t - xi_j)
    term1 = complex(np.sum(c * y))
    # the published sum runs over ordered pairs k<l; _pair_minor_sum counts
    # both orderings of the symmetric prefactor, hence half of it here
    term2 = -1.0 / (xi_i - xi_j) * _pair_minor_sum(
        t, x, y, pref_k=(t - xi_i), pref_l=(t - xi_i))
    return term1 + term2


def _density_density_c(model: PairingModel, t: np.ndarray, i: int, j: int,
                       nm: NormMatrix) -> complex:
    xi_i = complex(model.levels[i])
    xi_j = complex(model.levels[j])
    x = nm.solve(1.0 / (t - xi_i) ** 2)
    y = nm.solve(1.0 / (t - xi_j) ** 2)
    return _pair_minor_sum(t, x, y, pref_k=(t - xi_j), pref_l=(t - xi_i)) / (xi_j - xi_i)


def _spin_spin_c(model: PairingModel, t: np.ndarray, i: int, j: int,
                 nm: NormMatrix) -> complex:
    xi_i = complex(model.levels[i])
    xi_j = complex(model.levels[j])
    u = 1.0 / (t - xi_i) ** 2
    v = 1.0 / (t - xi_j) ** 2
    quad = 1.0 - 2.0 * (xi_i - xi_j) ** 2 * complex(u @ nm.solve(v))
    m = len(t)
    bord = np.zeros((m + 1, m + 1), dtype=complex)
    bord[:m, :m] = nm.entries
    bord[:m, m] = v
    bord[m, :m] = u
    # det of the bordered matrix is -det(N) * u N^{-1} v
    border = 1.0 + 2.0 * (xi_i - xi_j) ** 2 * complex(_logdet(bord).ratio(nm.det))
    _check_dual_route(quad, border, "spin_spin")
    return 0.5 * (quad + border)


def _pairing_amplitude_c(model: PairingModel, t: np.ndarray, nm: NormMatrix,
                         energy: float | None) -> complex:
    ones = np.ones(len(t), dtype=complex)
    amp = complex(np.sum(nm.solve(ones))) / model.coupling**2
    xi = np.asarray(model.levels, dtype=complex)
    phi_w = (xi[None, :] / (t[:, None] - xi[None, :]) ** 2).sum(axis=1)
    weighted = complex(np.sum(nm.solve(phi_w)))
    e = float(np.sum(t).real) if energy is None else energy
    resid = weighted - model.coupling * amp - e
    if abs(resid) > 1e-9 * max(1.0, abs(e)):
        raise CorrelatorError(
            f"energy identity violated by {abs(resid):.3e}; roots look off-shell")
    return amp


def pair_transfer(model: PairingModel, roots, i: int, j: int,
                  norm: NormMatrix | None = None) -> float:
    """Pair-hopping average between levels i and j (i receives, j donates).

    Rank-one part plus the double sum over root pairs; each summand is a
    rank-two column update of the norm determinant, evaluated through the
    stored factorization. i = j degenerates to the occupation.
    """
    _require_rational_spin_half(model)
    _check_level(model, i)
    _check_level(model, j)
    if i == j:
        return occupation(model, roots, i, norm=norm)
    t = _roots_array(roots)
    nm = norm if norm is not None else norm_matrix(model, t)
    return float(_pair_transfer_c(model, t, i, j, nm).real)


def density_density(model: PairingModel, roots, i: int, j: int,
                    norm: NormMatrix | None = None) -> float:
    """Joint occupation average of two levels; equals occupation at i = j."""
    _require_rational_spin_half(model)
    _check_level(model, i)
    _check_level(model, j)
    if i == j:
        return occupation(model, roots, i, norm=norm)
    t = _roots_array(roots)
    if len(t) < 2:
        return 0.0
    nm = norm if norm is not None else norm_matrix(model, t)
    return float(_density_density_c(model, t, i, j, nm).real)


def spin_spin(model: PairingModel, roots, i: int, j: int,
              norm: NormMatrix | None = None) -> float:
    """Spin-exchange average between levels i and j.

    Both the quadratic form 1 - 2(xi_i-xi_j)^2 u N^{-1} v and the bordered
    determinant ratio are evaluated; they must agree to 1e-10 and the mean
    is returned. i = j is the trivial same-site value 3.
    """
    _require_rational_spin_half(model)
    _check_level(model, i)
    _check_level(model, j)
    if i == j:
        return 3.0
    t = _roots_array(roots)
    nm = norm if norm is not None else norm_matrix(model, t)
    return float(_spin_spin_c(model, t, i, j, nm).real)


def pairing_amplitude(model: PairingModel, roots,
                      norm: NormMatrix | None = None,
                      energy: float | None = None) -> float:
    """Condensate amplitude: the pair-lowering/raising product average.

    Also evaluates the level-weighted occupation sum and checks the energy
    identity (weighted sum minus g times the amplitude equals the total
    energy) to 1e-9; a violation means the roots are off-shell.
    """
    _require_rational_spin_half(model)
    t = _roots_array(roots)
    nm = norm if norm is not None else norm_matrix(model, t)
    return float(_pairing_amplitude_c(model, t, nm, energy).real)


def correlator_report(model: PairingModel, roots) -> CorrelatorReport:
    """Every correlator of one eigenstate, sharing a single factorization.

    Diagonals: pair_transfer and density_density degenerate to the
    occupations, spin_spin to the same-site value 3.
    """
    _require_rational_spin_half(model)
    t = _roots_array(roots)
    nm = norm_matrix(model, t)
    n = model.n_levels
    leak = 0.0

    def _track(val: complex) -> float:
        nonlocal leak
        leak = max(leak, abs(val.imag))
        return float(val.real)

    occ = np.zeros(n)
    for a in range(n):
        occ[a] = _track(_occupation_c(model, t, a, nm))
    bt = np.zeros((n, n))
    dd = np.zeros((n, n))
    ss = np.zeros((n, n))
    for a in range(n):
        bt[a, a] = occ[a]
        dd[a, a] = occ[a]
        ss[a, a] = 3.0
        for b in range(n):
            if a == b:
                continue
            bt[a, b] = _track(_pair_transfer_c(model, t, a, b, nm))
            if len(t) > 1:
                dd[a, b] = _track(_density_density_c(model, t, a, b, nm))
            if b > a:
                ss[a, b] = ss[b, a] = _track(_spin_spin_c(model, t, a, b, nm))
    pairing = _track(_pairing_amplitude_c(model, t, nm, None))
    return CorrelatorReport(occupations=occ, pair_transfer=bt,
                            density_density=dd, spin_spin=ss,
                            pairing=pairing, imag_leakage=leak)
