"""Continuum limit of the uniform-band model and weight-function checks.

Two independent tool sets share this module.

Field diagnostics and the continuum limit. The resolvent-like field

    h(z) = sum_i 1/(z - t_i) - (1/2) sum_a d_a/(z - xi_a) - 1/g

packages a root configuration so that contour integrals count roots
(``contour_root_count``) and the value at a root, after removing that
root's own pole and the -1/(2g) background, is -1/2 times the Bethe
residual (``regularized_field_at_root``).  For levels filling (-1, 1)
with uniform density, the large-N ground state is described by three
moment integrals of the inverse quasiparticle energy over the band
(``band_moments``); ``gap_solve`` closes the gap and particle-number
conditions on the two unknowns (gap, band center) with a damped Newton
iteration on adaptively quadratured integrals, and ``continuum_compare``
checks finite solver runs against the resulting energy density.  The
finite-size family that converges to this continuum solution places n
levels at the midpoints xi_a = -1 + (2a - 1)/n and couples them with
g/n (``uniform_band_model``).

Weight-function consistency. The scalar weight W(t, xi) defined by

    log W = sum_i t_i/g - 2 sum_{i<j} log(t_i - t_j)
            + (1/2) sum_{a<b} d_a d_b log(xi_a - xi_b)
            + sum_{i,a} d_a log(t_i - xi_a)

is stationary in every t_i exactly on Bethe roots, and its two families
of log-derivatives reproduce, analytically,

    d log W / d t_i  = Bethe residual at t_i,
    d log W / d xi_a = (d_a/2) sum_{b != a} d_b/(xi_a - xi_b)
                       - d_a sum_j 1/(t_j - xi_a).

``chi_evaluate`` verifies both systems by central finite differences and
``kz_residual`` adds the compatibility (mixed-partial) check between
them that makes the pair of first-order systems jointly integrable, plus
the gamma-rescaled variant in which every exponent is divided by gamma.
Only derivatives and |W| are consumed downstream, so the branch chosen
for the half-integer powers (principal log of pairwise differences in
level order) never affects any reported residual.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import IntegrationWarning, quad

from .model import PairingModel, RootSet
from . import solver

__all__ = [
    "AnalysisError",
    "GapEquationError",
    "ContinuumSolution",
    "ContinuumComparison",
    "ChiEvaluation",
    "KzReport",
    "FD_TOL",
    "STATIONARITY_TOL",
    "GAP_RESIDUAL_TOL",
    "electric_field",
    "regularized_field_at_root",
    "contour_root_count",
    "band_moments",
    "half_filling_gap",
    "gap_solve",
    "uniform_band_model",
    "continuum_compare",
    "chi_evaluate",
    "kz_residual",
]

# Finite-difference agreement demanded from the first-order systems.
FD_TOL = 1e-6
# Finite-difference floor for the stationarity of log W at solver roots.
STATIONARITY_TOL = 1e-5
# Gap and number equations must close at least this tightly.
GAP_RESIDUAL_TOL = 1e-10
# Newton cannot proceed below this gap; the pairing solution is then
# indistinguishable from the normal state at quadrature accuracy.
GAP_FLOOR = 1e-12


class AnalysisError(ValueError):
    """Invalid input or failed numeric procedure in this module."""


class GapEquationError(AnalysisError):
    """The coupled gap and number equations could not be closed."""


def _roots_array(roots) -> np.ndarray:
    vals = roots.roots if isinstance(roots, RootSet) else roots
    return np.asarray(list(vals), dtype=complex)


# --- field diagnostics -----------------------------------------------------

def _pole_guard(z: complex, poles: np.ndarray, scale: float) -> None:
    if poles.size and float(np.min(np.abs(poles - z))) < 1e-12 * scale:
        raise AnalysisError("field evaluated on top of a pole")


def electric_field(model: PairingModel, roots, z: complex) -> complex:
    """Value at z of the resolvent field of a root configuration.

    Unit charges sit at the roots, charge -d_a/2 at level xi_a, on top of
    the constant background -1/g; the value at |z| -> infinity is -1/g.
    """
    t = _roots_array(roots)
    xi = np.asarray(model.levels, dtype=complex)
    d = np.asarray(model.degeneracies, dtype=float)
    z = complex(z)
    scale = max(model.level_scale, 1.0)
    _pole_guard(z, np.concatenate([t, xi]), scale)
    total = -1.0 / model.coupling
    if t.size:
        total += complex(np.sum(1.0 / (z - t)))
    total -= 0.5 * complex(np.sum(d / (z - xi)))
    return total


def regularized_field_at_root(model: PairingModel, roots, index: int) -> complex:
    """Field at root ``index`` with its own pole removed, shifted by 1/(2g).

    Equals -1/2 times the Bethe residual at that root, hence zero on
    shell: the equations of motion say each root sits where the field of
    all the other charges (half-weighted background included) vanishes.
    """
    t = _roots_array(roots)
    if not 0 <= index < t.size:
        raise AnalysisError("root index out of range")
    xi = np.asarray(model.levels, dtype=complex)
    d = np.asarray(model.degeneracies, dtype=float)
    others = np.arange(t.size) != index
    scale = max(model.level_scale, 1.0)
    _pole_guard(t[index], np.concatenate([t[others], xi]), scale)
    value = complex(np.sum(1.0 / (t[index] - t[others]))) if t.size > 1 else 0.0
    value -= 0.5 * complex(np.sum(d / (t[index] - xi)))
    value -= 1.0 / model.coupling
    return value + 0.5 / model.coupling


def contour_root_count(model: PairingModel, roots, radius: float | None = None,
                       samples: int = 2048) -> float:
    """Number of roots recovered from a circular contour moment of the field.

    Integrates (h(z) + 1/g)/(2 pi i) on |z| = radius by the periodic
    trapezoid rule (geometric convergence for a circle clear of all
    poles) and adds back the level-charge total sum_a d_a / 2.
    """
    t = _roots_array(roots)
    xi = np.asarray(model.levels, dtype=complex)
    if radius is None:
        extent = max(
            float(np.max(np.abs(t), initial=0.0)),
            float(np.max(np.abs(xi))),
            1.0,
        )
        radius = 2.0 * extent + 1.0
    theta = np.linspace(0.0, 2.0 * np.pi, samples, endpoint=False)
    z = radius * np.exp(1j * theta)
    vals = np.array([electric_field(model, t, zz) + 1.0 / model.coupling
                     for zz in z])
    integral = np.sum(vals * 1j * z) * (2.0 * np.pi / samples) / (2j * np.pi)
    count = integral + 0.5 * float(np.sum(model.degeneracies))
    return float(count.real)


# --- continuum gap, number, and energy -------------------------------------

@dataclass(frozen=True)
class ContinuumSolution:
    """Large-N ground state of the uniform band (-1, 1).

    The root curve ends at center +/- i*gap; filling is the pair count
    per level; energy_density is the limit of E/n along the matched
    finite-size family.  The closing residuals of the gap and number
    conditions are kept for the invariant check.
    """

    gap: float
    center: float
    filling: float
    energy_density: float
    gap_residual: float
    number_residual: float

    @property
    def endpoints(self) -> tuple[complex, complex]:
        return (self.center + 1j * self.gap, self.center - 1j * self.gap)


@dataclass(frozen=True)
class ContinuumComparison:
    """Finite-size energy densities against the continuum value.

    rows holds (n, energy_per_level, deviation); deviations must shrink
    strictly and, pairwise, at a rate within a factor two of 1/n.
    """

    solution: ContinuumSolution
    rows: tuple[tuple[int, float, float], ...]
    monotone: bool
    rate_consistent: bool

    @property
    def deviation_signs(self) -> tuple[int, ...]:
        return tuple(int(np.sign(r[2])) for r in self.rows)

    @property
    def passed(self) -> bool:
        return self.monotone and self.rate_consistent


def band_moments(gap: float, center: float) -> tuple[float, float, float]:
    """Moments m_k = (1/2) int_{-1}^{1} xi^k / E(xi) dxi for k = 0, 1, 2.

    E(xi) = sqrt((xi - center)^2 + gap^2).  The substitution
    xi = center + gap*sinh(u) removes the near-singular weight exactly,
    leaving adaptive quadrature a smooth integrand; the requested
    tolerance sits at the roundoff floor on purpose (the closed-form
    cross-checks in the tests demand ~1e-12), so the quadrature
    roundoff advisory is suppressed.
    """
    if gap <= 0.0:
        raise AnalysisError("band moments need a positive gap")
    lo = -np.arcsinh((1.0 + center) / gap)
    hi = np.arcsinh((1.0 - center) / gap)
    out = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IntegrationWarning)
        for k in range(3):
            val, _ = quad(
                lambda u: 0.5 * (center + gap * np.sinh(u)) ** k,
                lo, hi, epsabs=1e-13, epsrel=1e-13, limit=200,
            )
            out.append(float(val))
    return tuple(out)


def half_filling_gap(coupling: float) -> float:
    """Closed form of the gap condition at half filling: 1/sinh(1/g).

    At center zero the zeroth moment is arcsinh(1/gap), so the gap
    condition m0 = 1/g inverts analytically; used as the cross-check
    oracle for the quadrature path.
    """
    if coupling <= 0.0:
        raise AnalysisError("coupling must be positive")
    return 1.0 / np.sinh(1.0 / coupling)


def _gap_number_residual(gap: float, center: float, coupling: float,
                         filling: float) -> np.ndarray:
    m0, m1, _ = band_moments(gap, center)
    return np.array([
        m0 - 1.0 / coupling,
        center * m0 - m1 - (2.0 * filling - 1.0),
    ])


def gap_solve(coupling: float, filling: float) -> ContinuumSolution:
    """Solve the coupled gap and number conditions on (gap, center).

    Damped Newton with a finite-difference Jacobian on the two
    quadrature-evaluated conditions m0 = 1/g and center*m0 - m1 = 2f - 1;
    the energy density then follows from the moments as
    (center*m1 - m2 - gap^2 * m0 / 2) / 2.
    """
    if coupling <= 0.0:
        raise AnalysisError("coupling must be positive")
    if not 0.0 < filling < 1.0:
        raise AnalysisError("filling must lie strictly between 0 and 1")
    gap0 = half_filling_gap(coupling) if coupling > 0.02 else 0.0
    if gap0 < GAP_FLOOR:
        mu = 2.0 * filling - 1.0
        raise GapEquationError(
            "gap below the quadrature floor at coupling %g; normal-state "
            "fallback applies (center %g, energy density %g)"
            % (coupling, mu, 0.25 * (mu * mu - 1.0))
        )
    x = np.array([gap0, 2.0 * filling - 1.0])
    res = _gap_number_residual(x[0], x[1], coupling, filling)
    for _ in range(80):
        norm = float(np.max(np.abs(res)))
        if norm < 1e-13:
            break
        jac = np.zeros((2, 2))
        for k in range(2):
            h = 1e-7 * max(1.0, abs(x[k]))
            xp = x.copy(); xp[k] += h
            xm = x.copy(); xm[k] -= h
            jac[:, k] = (
                _gap_number_residual(xp[0], xp[1], coupling, filling)
                - _gap_number_residual(xm[0], xm[1], coupling, filling)
            ) / (2.0 * h)
        try:
            step = np.linalg.solve(jac, -res)
        except np.linalg.LinAlgError as exc:
            raise GapEquationError("singular Jacobian in the gap iteration") from exc
        lam = 1.0
        while lam > 1e-8:
            xn = x + lam * step
            if xn[0] > GAP_FLOOR:
                rn = _gap_number_residual(xn[0], xn[1], coupling, filling)
                if float(np.max(np.abs(rn))) < norm:
                    x, res = xn, rn
                    break
            lam *= 0.5
        else:
            raise GapEquationError("gap iteration stalled (no descent step)")
    else:
        raise GapEquationError("gap iteration did not converge in 80 steps")
    gap, center = float(x[0]), float(x[1])
    m0, m1, m2 = band_moments(gap, center)
    energy = 0.5 * (center * m1 - m2 - 0.5 * gap * gap * m0)
    return ContinuumSolution(
        gap=gap,
        center=center,
        filling=filling,
        energy_density=float(energy),
        gap_residual=abs(m0 - 1.0 / coupling),
        number_residual=abs(center * m0 - m1 - (2.0 * filling - 1.0)),
    )


def uniform_band_model(coupling: float, n_levels: int,
                       filling: float = 0.5) -> PairingModel:
    """Finite member of the family converging to ``gap_solve``'s solution.

    n_levels midpoints of (-1, 1) and pair coupling g/n; the pair count
    is filling * n_levels, which must be an integer.
    """
    pairs = filling * n_levels
    if abs(pairs - round(pairs)) > 1e-12:
        raise AnalysisError("filling * n_levels must be an integer")
    levels = [-1.0 + (2.0 * a + 1.0) / n_levels for a in range(n_levels)]
    return PairingModel(levels=levels, pairs=int(round(pairs)),
                        coupling=coupling / n_levels)


def continuum_compare(coupling: float, n_list, filling: float = 0.5,
                      schedule=None) -> ContinuumComparison:
    """Ground-state energy per level against the continuum density.

    Solves the ground state for each n in n_list on the matched
    finite-size family and reports deviations from the continuum energy
    density; passes when |deviation| falls strictly and successive
    ratios stay within a factor two of the 1/n rate.  The sign of the
    deviation is recorded, not asserted (empirically the finite systems
    approach from below).
    """
    n_list = [int(n) for n in n_list]
    if len(n_list) < 2 or any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise AnalysisError("need a strictly increasing list of sizes")
    sol = gap_solve(coupling, filling)
    rows = []
    for n in n_list:
        m = uniform_band_model(coupling, n, filling)
        rs = solver.continue_in_g(m, schedule=schedule)
        e_per = float(np.sum(np.real(rs.roots))) / n
        rows.append((n, e_per, e_per - sol.energy_density))
    devs = [abs(r[2]) for r in rows]
    monotone = all(b < a for a, b in zip(devs, devs[1:]))
    rate_ok = True
    for (n1, _, d1), (n2, _, d2) in zip(rows, rows[1:]):
        if d2 == 0.0:
            continue
        predicted = n2 / n1
        ratio = abs(d1 / d2)
        if not predicted / 2.0 <= ratio <= predicted * 2.0:
            rate_ok = False
    return ContinuumComparison(solution=sol, rows=tuple(rows),
                               monotone=monotone, rate_consistent=rate_ok)


# --- weight function and its first-order systems ----------------------------

@dataclass(frozen=True)
class ChiEvaluation:
    """Log-weight at one configuration with both derivative systems.

    root_rhs[i] is the analytic d log W / d t_i (the Bethe residual);
    level_rhs[a] is the analytic d log W / d xi_a.  The residual vectors
    compare central finite differences of log W against those values,
    relative to max(1, |rhs|).
    """

    roots: tuple[complex, ...]
    levels: tuple[float, ...]
    coupling: float
    gamma: float
    log_weight: complex
    root_rhs: tuple[complex, ...]
    level_rhs: tuple[complex, ...]
    root_residuals: tuple[float, ...]
    level_residuals: tuple[float, ...]

    @property
    def max_root_residual(self) -> float:
        return max(self.root_residuals, default=0.0)

    @property
    def max_level_residual(self) -> float:
        return max(self.level_residuals, default=0.0)

    @property
    def passed(self) -> bool:
        return (self.max_root_residual <= FD_TOL
                and self.max_level_residual <= FD_TOL)


@dataclass(frozen=True)
class KzReport:
    """Compatibility of the two first-order systems of the log-weight.

    mixed_fd_agreement: the cross second derivatives d^2 log W
    / (d xi_a d t_i), obtained by differencing each analytic first-order
    system in the other family of variables, against each other;
    mixed_vs_exact: the same values against the closed form
    d_a/(t_i - xi_a)^2; gamma_residual: the finite-difference check of
    the rescaled weight (all exponents divided by gamma).
    """

    evaluation: ChiEvaluation
    gamma: float
    mixed_fd_agreement: float
    mixed_vs_exact: float
    gamma_residual: float

    @property
    def passed(self) -> bool:
        return (self.evaluation.passed
                and self.mixed_fd_agreement <= FD_TOL
                and self.mixed_vs_exact <= FD_TOL
                and self.gamma_residual <= FD_TOL)


def _check_rational(model: PairingModel) -> None:
    if model.kind != "rational":
        raise AnalysisError("weight-function checks cover the rational kind only")


def _distinct_guard(t: np.ndarray, xi: np.ndarray, scale: float) -> None:
    floor = 1e-10 * scale
    m = t.size
    for i in range(m):
        for j in range(i + 1, m):
            if abs(t[i] - t[j]) < floor:
                raise AnalysisError("coincident roots in weight evaluation")
    if m and xi.size:
        if float(np.min(np.abs(t[:, None] - xi[None, :]))) < floor:
            raise AnalysisError("root on top of a level in weight evaluation")


def _log_weight(t: np.ndarray, xi: np.ndarray, d: np.ndarray, coupling: float,
                gamma: float) -> complex:
    val = complex(np.sum(t)) / coupling
    m = t.size
    for i in range(m):
        for j in range(i + 1, m):
            val -= 2.0 * np.log(t[i] - t[j])
    n = xi.size
    for a in range(n):
        for b in range(a + 1, n):
            val += 0.5 * d[a] * d[b] * np.log(complex(xi[a] - xi[b]))
    for i in range(m):
        val += complex(np.sum(d * np.log(t[i] - xi)))
    return val / gamma


def _level_rhs(t: np.ndarray, xi: np.ndarray, d: np.ndarray, a: int) -> complex:
    others = np.arange(xi.size) != a
    val = 0.5 * d[a] * complex(np.sum(d[others] / (xi[a] - xi[others])))
    if t.size:
        val -= d[a] * complex(np.sum(1.0 / (t - xi[a])))
    return val


def chi_evaluate(t_values, model: PairingModel, gamma: float = 1.0,
                 fd_step: float = 1e-6) -> ChiEvaluation:
    """Evaluate log W and verify both first-order systems at one point.

    Central differences use a relative step along the real direction
    (log W is holomorphic in each root, so that difference converges to
    the complex derivative).  On-shell roots make every root_rhs entry
    vanish, which is the stationarity property the solver's roots must
    reproduce to finite-difference accuracy.
    """
    _check_rational(model)
    t = _roots_array(t_values)
    xi = np.asarray(model.levels, dtype=float)
    d = np.asarray(model.degeneracies, dtype=float)
    g = model.coupling
    _distinct_guard(t, xi.astype(complex), max(model.level_scale, 1.0))

    base_rhs_t = solver.residual(model, t) / gamma if t.size else np.zeros(0, complex)
    rhs_x = np.array([_level_rhs(t, xi, d, a) for a in range(xi.size)]) / gamma

    res_t, res_x = [], []
    for i in range(t.size):
        h = fd_step * max(1.0, abs(t[i]))
        tp = t.copy(); tp[i] += h
        tm = t.copy(); tm[i] -= h
        fd = (_log_weight(tp, xi, d, g, gamma)
              - _log_weight(tm, xi, d, g, gamma)) / (2.0 * h)
        res_t.append(abs(fd - base_rhs_t[i]) / max(1.0, abs(base_rhs_t[i])))
    for a in range(xi.size):
        h = fd_step * max(1.0, abs(xi[a]))
        xp = xi.copy(); xp[a] += h
        xm = xi.copy(); xm[a] -= h
        fd = (_log_weight(t, xp, d, g, gamma)
              - _log_weight(t, xm, d, g, gamma)) / (2.0 * h)
        res_x.append(abs(fd - rhs_x[a]) / max(1.0, abs(rhs_x[a])))

    return ChiEvaluation(
        roots=tuple(t),
        levels=tuple(float(x) for x in xi),
        coupling=g,
        gamma=gamma,
        log_weight=_log_weight(t, xi, d, g, gamma),
        root_rhs=tuple(base_rhs_t),
        level_rhs=tuple(rhs_x),
        root_residuals=tuple(res_t),
        level_residuals=tuple(res_x),
    )


def kz_residual(t_values, model: PairingModel, gamma: float = 1.0,
                fd_step: float = 1e-6) -> KzReport:
    """Compatibility report for the pair of first-order systems.

    The two systems d log W/d t_i and d log W/d xi_a commute exactly when
    their cross derivatives agree; both finite-difference routes are
    compared against each other and against the closed form
    d_a/(t_i - xi_a)^2.  This is the integrability property behind the
    modified Knizhnik-Zamolodchikov system solved by contour integrals
    of W against Bethe states, so the same report covers the gamma = 1
    requirement and the rescaled gamma != 1 variant.
    """
    _check_rational(model)
    evaluation = chi_evaluate(t_values, model, gamma=1.0, fd_step=fd_step)
    t = _roots_array(t_values)
    xi = np.asarray(model.levels, dtype=float)
    d = np.asarray(model.degeneracies, dtype=float)

    agree = exact = 0.0
    for i in range(t.size):
        for a in range(xi.size):
            ha = fd_step * max(1.0, abs(xi[a]))
            xp = xi.copy(); xp[a] += ha
            xm = xi.copy(); xm[a] -= ha
            fd_of_root = (
                solver.residual(model.with_levels(list(xp)), t)[i]
                - solver.residual(model.with_levels(list(xm)), t)[i]
            ) / (2.0 * ha)
            ht = fd_step * max(1.0, abs(t[i]))
            tp = t.copy(); tp[i] += ht
            tm = t.copy(); tm[i] -= ht
            fd_of_level = (_level_rhs(tp, xi, d, a)
                           - _level_rhs(tm, xi, d, a)) / (2.0 * ht)
            closed = d[a] / (t[i] - xi[a]) ** 2
            scale = max(1.0, abs(closed))
            agree = max(agree, abs(fd_of_root - fd_of_level) / scale)
            exact = max(exact,
                        abs(fd_of_root - closed) / scale,
                        abs(fd_of_level - closed) / scale)

    gamma_res = 0.0
    if t.size:
        scaled = chi_evaluate(t_values, model, gamma=gamma, fd_step=fd_step)
        gamma_res = max(scaled.max_root_residual, scaled.max_level_residual)

    return KzReport(
        evaluation=evaluation,
        gamma=gamma,
        mixed_fd_agreement=float(agree),
        mixed_vs_exact=float(exact),
        gamma_residual=float(gamma_res),
    )
