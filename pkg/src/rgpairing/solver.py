"""Richardson-root finder: damped Newton plus homotopy continuation in g.

The Bethe equations for M pairs over N levels,

    r_i = sum_a d_a/(t_i - xi_a) - 2 sum_{k != i} 1/(t_i - t_k) + 1/g = 0,

(cot kernels for the trig kind) are solved by continuation from the free
limit: at g -> 0 each root sits on an occupied level, so a StateLabel
(which levels hold how many pairs) seeds a unique branch that is then
marched adaptively up to the requested coupling. Root collisions along the
way (real roots merging into complex conjugate doublets) are handled by
redoing the leg with slightly complex levels and relaxing the deformation
back to zero at the target coupling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .model import PairingModel, RootSet, SpectrumResult, capacity_configs

__all__ = [
    "ContinuationSchedule",
    "StateLabel",
    "SolverError",
    "ConvergenceError",
    "CollisionError",
    "residual",
    "jacobian",
    "solve_at_g",
    "continue_in_g",
    "energy",
    "gaudin_eigenvalues",
    "generalized_energy",
    "enumerate_labels",
    "ground_label",
    "seed_roots",
    "full_spectrum",
    "spectrum_result",
]

COLLISION_COND = 1e10


class SolverError(RuntimeError):
    pass


class ConvergenceError(SolverError):
    """Newton failed; .roots holds the last iterate."""

    def __init__(self, msg: str, roots=None):
        super().__init__(msg)
        self.roots = None if roots is None else tuple(roots)


class CollisionError(SolverError):
    pass


@dataclass(frozen=True)
class ContinuationSchedule:
    g_target: float
    g_start: float | None = None        # default 1e-3 * mean level spacing
    max_step: float | None = None
    min_step: float = 1e-12
    newton_tol: float = 1e-12
    max_newton_iters: int = 50
    deformation_epsilon: float = 0.0    # 0 -> auto from mean spacing

    def resolved(self, model: PairingModel) -> "ContinuationSchedule":
        spacing = _mean_spacing(model)
        g0 = self.g_start if self.g_start is not None else 1e-3 * spacing
        g0 = min(g0, self.g_target)
        step = self.max_step if self.max_step is not None else max((self.g_target - g0) / 5.0, g0)
        eps = self.deformation_epsilon if self.deformation_epsilon > 0 else 0.05 * spacing
        if not (0 < g0 <= self.g_target):
            raise ValueError("schedule needs 0 < g_start <= g_target")
        if self.min_step > step:
            raise ValueError("min_step exceeds max_step")
        return replace(self, g_start=g0, max_step=step, deformation_epsilon=eps)


def _mean_spacing(model: PairingModel) -> float:
    lv = [complex(x).real for x in model.levels]
    if len(lv) < 2:
        return max(1.0, abs(lv[0]) if lv else 1.0)
    return (max(lv) - min(lv)) / (len(lv) - 1)


@dataclass(frozen=True)
class StateLabel:
    """Which level slots hold pairs in the g -> 0 limit.

    occupied_levels lists level indices with repetition up to the level's
    capacity d_a; the ground state fills the lowest slots.
    """

    occupied_levels: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "occupied_levels", tuple(sorted(self.occupied_levels)))

    def multiplicities(self, n_levels: int) -> tuple[int, ...]:
        m = [0] * n_levels
        for a in self.occupied_levels:
            m[a] += 1
        return tuple(m)


def ground_label(model: PairingModel) -> StateLabel:
    occ: list[int] = []
    for a in range(model.n_levels):
        take = min(model.degeneracies[a], model.pairs - len(occ))
        occ.extend([a] * take)
        if len(occ) == model.pairs:
            break
    return StateLabel(tuple(occ))


def enumerate_labels(model: PairingModel) -> list[StateLabel]:
    """Every way to distribute M pairs over level capacities, in the same
    order the oracle enumerates its sector basis."""
    labels = []
    for cfg in capacity_configs(model.degeneracies, model.pairs):
        occ: list[int] = []
        for a, m in enumerate(cfg):
            occ.extend([a] * m)
        labels.append(StateLabel(tuple(occ)))
    return labels


# --- residual / jacobian ------------------------------------------------

def _kernel_diffs(model: PairingModel, t: np.ndarray):
    """Pairwise differences t_i - xi_a and t_i - t_k with pole checks."""
    xi = np.asarray(model.levels, dtype=complex)
    scale = model.level_scale
    A = t[:, None] - xi[None, :]
    if A.size and np.min(np.abs(A)) < 1e-13 * scale:
        raise SolverError("root sits on a level (pole in the equations)")
    T = t[:, None] - t[None, :]
    m = len(t)
    if m > 1:
        off = np.abs(T[~np.eye(m, dtype=bool)])
        if np.min(off) < 1e-13 * scale:
            raise SolverError("coincident roots")
    return A, T


def residual(model: PairingModel, roots) -> np.ndarray:
    """Bethe-equation residual r_i at each root; zero iff on shell."""
    t = np.asarray(list(roots), dtype=complex)
    m = len(t)
    if m == 0:
        return np.zeros(0, dtype=complex)
    d = np.asarray(model.degeneracies, dtype=float)
    A, T = _kernel_diffs(model, t)
    eye = np.eye(m, dtype=bool)
    if model.kind == "rational":
        r = (d[None, :] / A).sum(axis=1)
        invT = np.zeros_like(T)
        invT[~eye] = 1.0 / T[~eye]
        r -= 2.0 * invT.sum(axis=1)
    else:
        r = (d[None, :] * _cot(A)).sum(axis=1)
        cotT = np.zeros_like(T)
        cotT[~eye] = _cot(T[~eye])
        r -= 2.0 * cotT.sum(axis=1)
    return r + 1.0 / model.coupling


def jacobian(model: PairingModel, roots) -> np.ndarray:
    """J_ik = dr_i/dt_k; symmetric."""
    t = np.asarray(list(roots), dtype=complex)
    m = len(t)
    if m == 0:
        return np.zeros((0, 0), dtype=complex)
    d = np.asarray(model.degeneracies, dtype=float)
    A, T = _kernel_diffs(model, t)
    eye = np.eye(m, dtype=bool)
    J = np.zeros((m, m), dtype=complex)
    if model.kind == "rational":
        off = np.zeros_like(T)
        off[~eye] = 1.0 / T[~eye] ** 2
        J[~eye] = -2.0 * off[~eye]
        J[eye] = -(d[None, :] / A**2).sum(axis=1) + 2.0 * off.sum(axis=1)
    else:
        off = np.zeros_like(T)
        off[~eye] = 1.0 / np.sin(T[~eye]) ** 2
        J[~eye] = -2.0 * off[~eye]
        J[eye] = -(d[None, :] / np.sin(A) ** 2).sum(axis=1) + 2.0 * off.sum(axis=1)
    return J


def _cot(z):
    return np.cos(z) / np.sin(z)


def _residual_scale(model: PairingModel, t: np.ndarray) -> float:
    """Sum of |terms| entering the residual: the yardstick for cancellation
    noise. Near-coincident roots push this far above 1 + 1/g."""
    if len(t) == 0:
        return 1.0
    xi = np.asarray(model.levels, dtype=complex)
    d = np.asarray(model.degeneracies, dtype=float)
    A = np.abs(t[:, None] - xi[None, :]) if model.kind == "rational" \
        else np.abs(np.sin(t[:, None] - xi[None, :]))
    s = (d[None, :] / A).sum(axis=1)
    m = len(t)
    if m > 1:
        T = t[:, None] - t[None, :]
        eye = np.eye(m, dtype=bool)
        TT = np.abs(T[~eye]) if model.kind == "rational" else np.abs(np.sin(T[~eye]))
        s = s + 2.0 * (1.0 / TT.reshape(m, m - 1)).sum(axis=1)
    return float(np.max(s) + 1.0 / model.coupling)


# --- Newton -------------------------------------------------------------

def _newton(model: PairingModel, seed: np.ndarray, tol: float, max_iters: int):
    """Damped Newton; returns (roots, iters). Raises ConvergenceError with the
    last iterate attached.

    The convergence target is tol * (1 + 1/g), loosened to tol * (residual
    term scale) when cancellation noise makes the nominal bound unreachable
    in doubles (nearly coincident roots mid-continuation)."""
    t = np.array(seed, dtype=complex)
    if len(t) == 0:
        return t, 0
    r = residual(model, t)
    best = float(np.max(np.abs(r)))
    for it in range(max_iters + 1):
        target = tol * max(1.0 + 1.0 / model.coupling, _residual_scale(model, t))
        if best <= target:
            return t, it
        if it == max_iters:
            break
        J = jacobian(model, t)
        try:
            dt = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError:
            raise ConvergenceError("singular jacobian (root collision?)", t)
        lam = 1.0
        for _ in range(11):
            try:
                r_new = residual(model, t + lam * dt)
            except SolverError:
                lam *= 0.5
                continue
            nrm = float(np.max(np.abs(r_new)))
            if nrm < best or nrm <= target:
                t = t + lam * dt
                r, best = r_new, nrm
                break
            lam *= 0.5
        else:
            # a full step below the representable spacing of the iterate means
            # the roots are already exact to double precision; the residual
            # floor is then jacobian * ulp and cannot be pushed lower
            if float(np.max(np.abs(dt))) <= 64.0 * np.finfo(float).eps * (
                    1.0 + float(np.max(np.abs(t)))):
                return t, it + 1
            raise ConvergenceError("newton stalled at residual %.3e" % best, t)
    raise ConvergenceError("newton exceeded %d iterations (residual %.3e)" % (max_iters, best), t)


def _closure_check(roots: np.ndarray, scale: float) -> tuple[np.ndarray, bool]:
    """Enforce conjugation closure of the multiset, within tolerance.

    Real-level root sets are conjugation-closed exactly, so any mismatch is
    numerical. Imaginary dust on real roots is zeroed, and near-conjugate
    pairs are symmetrized onto (z, conj z): next to a pair merge the
    Jacobian is singular and the splitting direction carries sqrt(machine
    epsilon) noise that no polish can remove, which is why the matching
    tolerance is far looser than the residual target. Mismatch beyond it
    reports a genuinely unclosed set.
    """
    t = np.array(roots, dtype=complex)
    t.imag[np.abs(t.imag) < 1e-10 * scale] = 0.0
    out = np.empty_like(t)
    filled = 0
    pool = list(range(len(t)))
    while pool:
        i = pool[0]
        v = t[i]
        best_k, best_d = -1, math.inf
        for k in pool:
            dd = abs(t[k] - v.conjugate())
            if dd < best_d:
                best_k, best_d = k, dd
        if best_d > 1e-7 * max(scale, abs(v)):
            return t, False
        if best_k == i:
            # self-conjugate: real up to noise below the matching tolerance
            out[filled] = complex(v.real, 0.0)
            filled += 1
            pool.remove(i)
        else:
            z = 0.5 * (v + t[best_k].conjugate())
            out[filled] = z
            out[filled + 1] = z.conjugate()
            filled += 2
            pool.remove(best_k)
            pool.remove(i)
    return out[:filled], True


def solve_at_g(model: PairingModel, seed, schedule: ContinuationSchedule | None = None) -> RootSet:
    """Newton-polish a seed at the model's own coupling."""
    sch = schedule or ContinuationSchedule(g_target=model.coupling)
    t = np.asarray(list(seed), dtype=complex)
    roots, iters = _newton(model, t, sch.newton_tol, sch.max_newton_iters)
    r = residual(model, roots)
    real_data = all(complex(x).imag == 0.0 for x in model.levels)
    roots, closed = _closure_check(roots, model.level_scale) if real_data else (roots, False)
    return RootSet(
        roots=tuple(roots),
        g=model.coupling,
        residual=float(np.max(np.abs(r))) if len(roots) else 0.0,
        conjugation_closed=closed,
        meta={"newton_iters": iters},
    )


# --- seeding ------------------------------------------------------------

def _gen_binom(x: float, k: int) -> float:
    """Generalized binomial coefficient x(x-1)...(x-k+1)/k! (x may be a
    negative integer, where the gamma-function route hits poles)."""
    num = 1.0
    for j in range(k):
        num *= x - j
    return num / math.factorial(k)


def _laguerre_cluster(m: int, d: int) -> np.ndarray:
    """Roots of the degree-m generalized Laguerre polynomial with
    alpha = -d-1: the g->0 shape of an m-pair cluster on one level of
    capacity d (electrostatics of the leading-order equations)."""
    a = -d - 1.0
    coeff_asc = [(-1.0) ** k * _gen_binom(m + a, m - k) / math.factorial(k) for k in range(m + 1)]
    return np.roots(coeff_asc[::-1])


def seed_roots(model: PairingModel, label: StateLabel, g: float) -> np.ndarray:
    """First-order small-g roots for a given occupation label.

    A level alpha holding m_a pairs contributes the cluster
    t_j = xi_a + u_j / (1/g + C_a), with u_j the Laguerre offsets above and
    C_a the mean field of the other levels and clusters:
    C_a = sum_{b != a} (d_b - 2 m_b) k(xi_a - xi_b), k the model kernel.
    For m_a = 1 this reduces to the textbook t = xi_a - d_a g + O(g^2).
    """
    mults = label.multiplicities(model.n_levels)
    if sum(mults) != model.pairs:
        raise ValueError("label occupies %d slots, model has %d pairs" % (sum(mults), model.pairs))
    for a, m in enumerate(mults):
        if m > model.degeneracies[a]:
            raise ValueError("label puts %d pairs on level %d (capacity %d)" % (m, a, model.degeneracies[a]))
    xi = np.asarray(model.levels, dtype=complex)
    d = model.degeneracies
    if model.kind == "rational":
        kern = lambda z: 1.0 / z
    else:
        kern = lambda z: complex(np.cos(z) / np.sin(z))
    out: list[complex] = []
    for a, m in enumerate(mults):
        if m == 0:
            continue
        c_a = sum((d[b] - 2 * mults[b]) * complex(kern(xi[a] - xi[b]))
                  for b in range(model.n_levels) if b != a)
        s = 1.0 / (1.0 / g + c_a)
        if m == 1:
            out.append(complex(xi[a] - d[a] * s))
        else:
            out.extend(complex(xi[a] + s * u) for u in _laguerre_cluster(m, d[a]))
    return np.asarray(out, dtype=complex)


# --- continuation -------------------------------------------------------

def _min_pair_distance(t: np.ndarray) -> float:
    m = len(t)
    if m < 2:
        return math.inf
    T = np.abs(t[:, None] - t[None, :])
    return float(np.min(T[~np.eye(m, dtype=bool)]))


def _root_clearances(model: PairingModel, t: np.ndarray) -> np.ndarray:
    """Per-root distance to the nearest level pole or sibling root."""
    t = np.asarray(t, dtype=complex)
    if len(t) == 0:
        return np.zeros(0)
    A = t[:, None] - np.asarray(model.levels, dtype=complex)[None, :]
    P = np.abs(A) if model.kind == "rational" else np.abs(np.sin(A))
    c = P.min(axis=1)
    if len(t) > 1:
        T = np.abs(t[:, None] - t[None, :])
        np.fill_diagonal(T, np.inf)
        c = np.minimum(c, T.min(axis=1))
    return c


def _march(model_at, drds_at, t: np.ndarray, s_from: float, s_to: float,
           sch: ContinuationSchedule, meta: dict) -> np.ndarray:
    """Adaptive predictor-corrector along a one-parameter model family.

    model_at(s) gives the model at parameter s; drds_at(model, t) the
    explicit derivative of the residual in s. Steps are capped so the
    predicted root movement stays below a fraction of the clearance (the
    smaller of the closest root pair distance and the closest root-to-pole
    distance; a root squeezed against a level must creep, never cross) and
    halved on Newton failure; underflow raises CollisionError.
    """
    span = s_to - s_from
    if span <= 0:
        return np.array(t, dtype=complex)
    s = s_from
    t = np.array(t, dtype=complex)
    ds = min(sch.max_step, max(sch.min_step, span * 0.1))
    while s < s_to:
        m_here = model_at(s)
        # tangent dt/ds = -J^{-1} dr/ds, reused for the movement cap
        try:
            J = jacobian(m_here, t)
            v = np.linalg.solve(J, -drds_at(m_here, t))
        except (np.linalg.LinAlgError, SolverError):
            v = np.zeros_like(t)
        va = np.abs(v)
        vmax = float(va.max()) if len(t) else 0.0
        clear = _root_clearances(m_here, t)
        with np.errstate(all="ignore"):
            cap = float(np.min(0.3 * clear / np.maximum(va, 1e-300))) if vmax > 0 else math.inf
        step = min(ds, s_to - s, max(cap, sch.min_step))
        s_next = s + step
        pred = t + v * step
        m_next = model_at(s_next)
        try:
            new_t, iters = _newton(m_next, pred, sch.newton_tol, sch.max_newton_iters)
        except (ConvergenceError, SolverError):
            ds = step * 0.5
            if ds < sch.min_step:
                raise CollisionError("continuation step underflow near s=%.6g" % s)
            continue
        # corrector must land near the predictor, else a branch was hopped
        cnew = np.minimum(clear, _root_clearances(m_next, new_t))
        jump = np.maximum(0.5 * cnew, 2.0 * va * step + 1e-12 * m_here.level_scale)
        if len(t) and np.any(np.abs(new_t - pred) > jump):
            ds = step * 0.5
            if ds < sch.min_step:
                raise CollisionError("corrector jumped branches near s=%.6g" % s)
            continue
        t, s = new_t, s_next
        meta["newton_iters_total"] = meta.get("newton_iters_total", 0) + iters
        meta["steps"] = meta.get("steps", 0) + 1
        ds = min(sch.max_step, ds * 1.6) if iters <= 4 else max(sch.min_step, ds * 0.7)
    return t


def _drds_coupling(model: PairingModel, t: np.ndarray) -> np.ndarray:
    # residual carries +1/g; d/dg = -1/g^2, identical for every root
    return np.full(len(t), -1.0 / model.coupling**2, dtype=complex)


def _g_march(model: PairingModel, t: np.ndarray, g_from: float, g_to: float,
             sch: ContinuationSchedule, meta: dict) -> np.ndarray:
    return _march(lambda g: model.with_coupling(g), _drds_coupling, t, g_from, g_to, sch, meta)


def _deformation_offsets(n: int) -> np.ndarray:
    """Distinct imaginary offsets with alternating sign, so neighboring
    levels (whose roots are the ones that collide) are pushed apart."""
    k = np.arange(n, dtype=float)
    return (-1.0) ** k * (1.0 + k / (2.0 * max(n, 1)))


def continue_in_g(model: PairingModel, label: StateLabel | None = None,
                  schedule: ContinuationSchedule | None = None) -> RootSet:
    """Continue a labeled g->0 branch to the model's coupling.

    Collisions (step underflow) trigger the deformed-level fallback: the
    whole leg is redone with xi_a -> xi_a + i delta_a, then the deformation
    is relaxed to zero at fixed g and the result polished on the real model.
    """
    label = label or ground_label(model)
    sch = (schedule or ContinuationSchedule(g_target=model.coupling)).resolved(model)
    meta: dict = {"deformed": False}
    if model.pairs == 0:
        return RootSet((), model.coupling, 0.0, True, meta)

    seed = seed_roots(model, label, sch.g_start)
    try:
        t0, _ = _newton(model.with_coupling(sch.g_start), seed, sch.newton_tol, sch.max_newton_iters)
        roots = _g_march(model, t0, sch.g_start, sch.g_target, sch, meta)
    except (CollisionError, ConvergenceError, SolverError):
        roots = _deformed_continuation(model, label, sch, meta)
    return _finalize(model.with_coupling(sch.g_target), roots, sch, meta)


def _deformed_continuation(model: PairingModel, label: StateLabel,
                           sch: ContinuationSchedule, meta: dict) -> np.ndarray:
    meta["deformed"] = True
    offsets = _deformation_offsets(model.n_levels)
    xi = np.asarray(model.levels, dtype=float)
    last_err: Exception | None = None
    for attempt in range(3):
        delta = sch.deformation_epsilon * (2.0**attempt) * offsets
        dmodel = model.with_levels(tuple(xi + 1j * delta))
        try:
            seed = seed_roots(dmodel, label, sch.g_start)
            t0, _ = _newton(dmodel.with_coupling(sch.g_start), seed, sch.newton_tol, sch.max_newton_iters)
            roots = _g_march(dmodel, t0, sch.g_start, sch.g_target, sch, meta)
            return _relax_deformation(model, roots, delta, sch, meta)
        except (CollisionError, ConvergenceError, SolverError) as err:
            last_err = err
    raise CollisionError("unrecoverable collision: deformation attempts failed (%s)" % last_err)


def _relax_deformation(model: PairingModel, roots: np.ndarray, delta: np.ndarray,
                       sch: ContinuationSchedule, meta: dict) -> np.ndarray:
    """Second continuation at fixed g: levels xi + i(1-s) delta, s: 0 -> 1."""
    xi = np.asarray(model.levels, dtype=float)
    g = sch.g_target

    def model_at(s: float) -> PairingModel:
        return model.with_levels(tuple(xi + 1j * (1.0 - s) * delta)).with_coupling(g)

    def drds(m_at: PairingModel, t: np.ndarray) -> np.ndarray:
        # d/ds of sum_a d_a k(t_i - xi_a - i(1-s)delta_a) with k = 1/x or cot:
        # argument derivative is +i delta_a
        lv = np.asarray(m_at.levels, dtype=complex)
        d = np.asarray(m_at.degeneracies, dtype=float)
        A = t[:, None] - lv[None, :]
        if m_at.kind == "rational":
            return -((d * delta)[None, :] * 1j / A**2).sum(axis=1)
        return -((d * delta)[None, :] * 1j / np.sin(A) ** 2).sum(axis=1)

    relax_sch = replace(sch, max_step=0.25, min_step=1e-13)
    meta["relax_stages"] = meta.get("relax_stages", 0) + 1
    return _march(model_at, drds, roots, 0.0, 1.0, relax_sch, meta)


def _fold_trig_strip(model: PairingModel, roots: np.ndarray) -> np.ndarray:
    lo = min(complex(x).real for x in model.levels)
    t = np.array(roots, dtype=complex)
    return t - np.pi * np.floor((t.real - lo) / np.pi)


def _polish(model: PairingModel, t: np.ndarray) -> np.ndarray:
    """A few undamped Newton steps kept only while they strictly improve;
    pushes the residual to its floating-point floor (the convergence target
    alone can leave O(1e-9) root error when the Jacobian is ill-conditioned
    next to a just-merged pair)."""
    if len(t) == 0:
        return t
    best = float(np.max(np.abs(residual(model, t))))
    for _ in range(4):
        try:
            dt = np.linalg.solve(jacobian(model, t), -residual(model, t))
            cand = t + dt
            nrm = float(np.max(np.abs(residual(model, cand))))
        except (np.linalg.LinAlgError, SolverError):
            break
        if nrm < best:
            t, best = cand, nrm
        else:
            break
    return t


def _finalize(model: PairingModel, roots: np.ndarray, sch: ContinuationSchedule, meta: dict) -> RootSet:
    roots, iters = _newton(model, roots, sch.newton_tol, sch.max_newton_iters)
    roots = _polish(model, roots)
    meta["newton_iters_total"] = meta.get("newton_iters_total", 0) + iters
    if model.kind == "trig":
        roots = _fold_trig_strip(model, roots)
    roots, closed = _closure_check(roots, model.level_scale)
    if not closed:
        raise ConvergenceError("root multiset not conjugation-closed after continuation", roots)
    r = residual(model, roots)
    return RootSet(
        roots=tuple(roots),
        g=model.coupling,
        residual=float(np.max(np.abs(r))),
        conjugation_closed=closed,
        meta=meta,
    )


# --- derived eigenvalue quantities ---------------------------------------

def energy(roots: RootSet) -> float:
    e = sum(roots.roots)
    return float(e.real)


def spectrum_result(model: PairingModel, roots: RootSet) -> SpectrumResult:
    e = sum(roots.roots)
    return SpectrumResult(
        energy=float(e.real),
        imag_energy=float(abs(e.imag)),
        gaudin_eigenvalues=tuple(gaudin_eigenvalues(model, roots)),
    )


def gaudin_eigenvalues(model: PairingModel, roots: RootSet | list) -> np.ndarray:
    """Eigenvalues E_i of the commuting one-body operators on the Bethe state.

    rational: E_i = (1/2) sum_{a != i} 1/(xi_i - xi_a) + sum_j 1/(t_j - xi_i)
    trig:     E_i = sum_{a != i} cot(xi_i - xi_a) + sum_j cot(t_j - xi_i)
    (spin-1/2 levels). Both lines match the operator matrices built by the
    dense oracle: the trig operators are normalized so that roots of this
    module's residual are their exact common eigenvectors, which fixes the
    level-term coefficient and removes any bare 1/g from E_i. The trig
    values are invariant under shifting any root by a period.
    """
    if not model.all_spin_half:
        raise ValueError("gaudin_eigenvalues is defined for spin-1/2 levels")
    t = np.asarray(list(roots.roots if isinstance(roots, RootSet) else roots), dtype=complex)
    xi = np.asarray(model.levels, dtype=complex)
    n = model.n_levels
    out = np.zeros(n, dtype=complex)
    if model.kind == "rational":
        for i in range(n):
            out[i] = 0.5 * sum(1.0 / (xi[i] - xi[a]) for a in range(n) if a != i)
            out[i] += np.sum(1.0 / (t - xi[i])) if len(t) else 0.0
    else:
        for i in range(n):
            out[i] = sum(_cot(xi[i] - xi[a]) for a in range(n) if a != i)
            out[i] += np.sum(_cot(t - xi[i])) if len(t) else 0.0
    dust = float(np.max(np.abs(out.imag), initial=0.0))
    if dust > 1e-6 * max(1.0, float(np.max(np.abs(out.real), initial=1.0))):
        raise ValueError("complex one-body eigenvalues (imag %.2e): roots not conjugation closed?" % dust)
    return out.real


def generalized_energy(eps, gaudin_eigs, g: float) -> float:
    """Eigenvalue of the linear-combination Hamiltonian
    sum_i eps_i n_i - (g/2) sum_{i<j} [(eps_i - eps_j)/(xi_i - xi_j)] (sigma_i . sigma_j):
    equals -g sum_i eps_i E_i on the shared eigenvector."""
    eps = np.asarray(eps, dtype=float)
    ee = np.asarray(gaudin_eigs, dtype=float)
    if eps.shape != ee.shape:
        raise ValueError("eps and eigenvalue list must have equal length")
    return float(-g * np.dot(eps, ee))


# --- batched spectrum continuation ---------------------------------------
#
# Continuing hundreds of label branches one by one is dominated by Python
# call overhead, so the full-spectrum path marches every branch together
# with stacked-LAPACK Newton on a shared adaptive g grid. Branches that
# misbehave (collision, stall, corrector landing far from the tangent
# prediction) are retried in a second batched pass on deformed levels, and
# only the stragglers of that pass fall back to the scalar continuation.

def _xi_rows(xi):
    """Accept a shared (N,) level vector or per-branch (L, N) levels."""
    return xi[None, None, :] if xi.ndim == 1 else xi[:, None, :]


def _batch_residual(xi, d, g, kind, t):
    """t: (L, M) -> residual (L, M) plus per-branch term-scale (L,).

    xi may be (N,) shared or (L, N) per branch; g a scalar or (L,)."""
    A = t[:, :, None] - _xi_rows(xi)
    kA = 1.0 / A if kind == "rational" else _cot(A)
    r = (d[None, None, :] * kA).sum(axis=2)
    scale = (d[None, None, :] / (np.abs(A) if kind == "rational" else np.abs(np.sin(A)))).sum(axis=2)
    L, m = t.shape
    if m > 1:
        T = t[:, :, None] - t[:, None, :]
        mask = ~np.eye(m, dtype=bool)
        Toff = T[:, mask].reshape(L, m, m - 1)
        kT = 1.0 / Toff if kind == "rational" else _cot(Toff)
        r -= 2.0 * kT.sum(axis=2)
        scale += 2.0 * (1.0 / (np.abs(Toff) if kind == "rational" else np.abs(np.sin(Toff)))).sum(axis=2)
    ginv = 1.0 / np.asarray(g)
    if ginv.ndim == 1:
        return r + ginv[:, None], scale.max(axis=1) + np.abs(ginv)
    return r + float(ginv), scale.max(axis=1) + abs(float(ginv))


def _batch_jacobian(xi, d, kind, t):
    A = t[:, :, None] - _xi_rows(xi)
    L, m = t.shape
    dA = (d[None, None, :] / A**2) if kind == "rational" else (d[None, None, :] / np.sin(A) ** 2)
    diag = -dA.sum(axis=2)
    J = np.zeros((L, m, m), dtype=complex)
    if m > 1:
        T = t[:, :, None] - t[:, None, :]
        eye = np.eye(m, dtype=bool)
        inv2 = np.zeros_like(T)
        inv2[:, ~eye] = 1.0 / (T[:, ~eye] ** 2 if kind == "rational" else np.sin(T[:, ~eye]) ** 2)
        J = -2.0 * inv2
        diag = diag + 2.0 * inv2.sum(axis=2)
    J[:, np.eye(m, dtype=bool)] = diag
    return J


def _batch_min_pair(t):
    L, m = t.shape
    if m < 2:
        return np.full(L, np.inf)
    T = np.abs(t[:, :, None] - t[:, None, :])
    T[:, np.eye(m, dtype=bool)] = np.inf
    return T.min(axis=(1, 2))


def _batch_pole_clear(xi, t, kind):
    """Per-branch distance from the closest root to the closest level."""
    A = t[:, :, None] - _xi_rows(xi)
    m = np.abs(A) if kind == "rational" else np.abs(np.sin(A))
    return m.min(axis=(1, 2))


def _batch_root_clear(xi, t, kind):
    """Per-root clearance (L, M): distance to the nearest pole or sibling."""
    A = t[:, :, None] - _xi_rows(xi)
    P = np.abs(A) if kind == "rational" else np.abs(np.sin(A))
    c = P.min(axis=2)
    L, m = t.shape
    if m > 1:
        T = np.abs(t[:, :, None] - t[:, None, :])
        T[:, np.eye(m, dtype=bool)] = np.inf
        c = np.minimum(c, T.min(axis=2))
    return c


def _batch_bad(xi, t, scale):
    """Branches whose roots sit on a pole or on each other."""
    bad = np.min(np.abs(t[:, :, None] - _xi_rows(xi)), axis=(1, 2)) < 1e-13 * scale
    return bad | (_batch_min_pair(t) < 1e-13 * scale)


def _batch_newton(xi, d, g, kind, t, tol, alive, max_iters=16):
    """Warm-start Newton on all alive branches at fixed coupling(s). Mutates
    t in place; returns (t, converged mask). A branch that stalls with no
    improving step but already sits near the cancellation floor counts as
    converged; the march guards and the final polish keep it honest."""
    lscale = max(1.0, float(np.max(np.abs(xi))))
    gv = np.asarray(g, dtype=float)
    conv = np.zeros(len(t), dtype=bool)
    dead = ~np.asarray(alive, dtype=bool).copy()
    with np.errstate(all="ignore"):
        for _ in range(max_iters):
            work = ~dead & ~conv
            if not work.any():
                break
            widx = np.flatnonzero(work)
            xw = xi if xi.ndim == 1 else xi[widx]
            gw = gv if gv.ndim == 0 else gv[widx]
            bad = _batch_bad(xw, t[widx], lscale)
            dead[widx[bad]] = True
            widx = widx[~bad]
            if len(widx) == 0:
                break
            xw = xi if xi.ndim == 1 else xi[widx]
            gw = gv if gv.ndim == 0 else gv[widx]
            r, scale = _batch_residual(xw, d, gw, kind, t[widx])
            target = tol * np.maximum(1.0 + 1.0 / gw, scale)
            rn = np.max(np.abs(r), axis=1)
            done = rn <= target
            conv[widx[done]] = True
            todo = widx[~done]
            if len(todo) == 0:
                continue
            xt = xi if xi.ndim == 1 else xi[todo]
            gt = gv if gv.ndim == 0 else gv[todo]
            J = _batch_jacobian(xt, d, kind, t[todo])
            rr = r[~done]
            try:
                dt = np.linalg.solve(J, -rr[:, :, None])[:, :, 0]
            except np.linalg.LinAlgError:
                dt = np.zeros_like(t[todo])
                for q in range(len(todo)):
                    try:
                        dt[q] = np.linalg.solve(J[q], -rr[q])
                    except np.linalg.LinAlgError:
                        dead[todo[q]] = True
            base = rn[~done]
            # try the full step and a ladder of dampings in one stacked
            # evaluation, then keep the longest improving step per branch
            lams = 2.0 ** -np.arange(8, dtype=float)
            n = len(todo)
            m = t.shape[1]
            trials = t[todo][None, :, :] + lams[:, None, None] * dt[None, :, :]
            xs = xt if np.ndim(xt) == 1 else np.tile(xt, (len(lams), 1))
            gs = gt if np.ndim(gt) == 0 else np.tile(gt, len(lams))
            rt, _ = _batch_residual(xs, d, gs, kind, trials.reshape(-1, m))
            rtn = np.max(np.abs(rt), axis=1).reshape(len(lams), n)
            better = np.isfinite(rtn) & (rtn < base[None, :])
            first = np.argmax(better, axis=0)
            improved = better.any(axis=0)
            pick = trials[first, np.arange(n)]
            stalled = ~improved
            if stalled.any():
                tgt = (target[~done])[stalled]
                near_floor = base[stalled] <= 100.0 * tgt
                conv[todo[stalled][near_floor]] = True
                dead[todo[stalled][~near_floor]] = True
            t[todo[improved]] = pick[improved]
    return t, conv & ~dead


def _batch_tangent(xi, d, kind, t, alive, drds):
    """dt/ds = -J^{-1} dr/ds for alive branches, zeros elsewhere."""
    v = np.zeros_like(t)
    idx = np.flatnonzero(alive)
    if len(idx) == 0:
        return v
    xs = xi if xi.ndim == 1 else xi[idx]
    with np.errstate(all="ignore"):
        J = _batch_jacobian(xs, d, kind, t[idx])
        try:
            v[idx] = np.linalg.solve(J, -drds[idx][:, :, None])[:, :, 0]
        except np.linalg.LinAlgError:
            for k, q in enumerate(idx):
                try:
                    v[q] = np.linalg.solve(J[k], -drds[q])
                except np.linalg.LinAlgError:
                    pass
    v[~np.isfinite(v).all(axis=1)] = 0.0
    return v


def _batch_march_family(xi_of, drds_of, g_of, d, kind, t, alive, s_to, sch, lscale,
                        fail_budget=10, max_sweeps=2000):
    """Asynchronous predictor-corrector in a family parameter s: 0 -> s_to.

    Every branch carries its own position s and step ds, so one difficult
    branch never slows the rest. xi_of(s) maps the (L,) position vector to
    per-branch levels (L, N), g_of(s) to couplings, drds_of(s, t) to the
    explicit residual derivative. A branch whose corrector diverges or lands
    off the tangent prediction shrinks its step; after fail_budget lifetime
    failures it is dropped for the deformed/scalar rescue. Mutates and
    returns (t, alive)."""
    L = len(t)
    span = float(s_to)
    if span <= 0:
        return t, alive
    s = np.zeros(L)
    ds = np.full(L, span * 0.08)
    fails = np.zeros(L, dtype=int)
    for _sweep in range(max_sweeps):
        act = alive & (s < span * (1.0 - 1e-14))
        if not act.any():
            break
        xi_here = xi_of(s)
        v = _batch_tangent(xi_here, d, kind, t, act, drds_of(s, t))
        with np.errstate(all="ignore"):
            va = np.abs(v)
            vinf = va.max(axis=1)
            # cap the step so each root's predicted move stays inside its own
            # clearance: a pinned root may creep while its siblings stride
            clear = _batch_root_clear(xi_here, t, kind)
            room = (0.3 * clear / np.maximum(va, 1e-300)).min(axis=1)
            room = np.where(vinf > 0, room, np.inf)
            step = np.where(act, np.minimum(np.minimum(ds, span - s),
                                            np.maximum(room, span * 1e-9)), 0.0)
            s_next = s + step
            xi_next = xi_of(s_next)
            pred = t + v * step[:, None]
            tn = pred.copy()
            tn, conv = _batch_newton(xi_next, d, g_of(s_next), kind, tn,
                                     sch.newton_tol, act.copy())
            cnew = np.minimum(clear, _batch_root_clear(xi_next, tn, kind))
            dev = np.abs(tn - pred)
            guard = np.maximum(0.3 * np.where(np.isfinite(cnew), cnew, 1e30),
                               step[:, None] * va + 1e-9 * lscale)
            devok = np.all(dev <= guard, axis=1)
            mv = tn - t
            mv[~np.isfinite(mv)] = 0.0
            dots = np.real(np.sum(mv * np.conj(v), axis=1))
            mvn = np.sqrt(np.sum(np.abs(mv) ** 2, axis=1))
            vn = np.sqrt(np.sum(np.abs(v) ** 2, axis=1))
        # the accepted move must not point against the predictor tangent
        sized = (mvn > 1e-11 * lscale) & (vn > 0)
        aligned = ~sized | (dots >= -0.2 * mvn * vn)
        ok = act & conv & devok & aligned
        fail = act & ~ok
        t[ok] = tn[ok]
        s[ok] = s_next[ok]
        ds[ok] = np.minimum(span * 0.25, ds[ok] * 1.4)
        fails[fail] += 1
        ds[fail] *= 0.35
        alive &= ~(fail & ((fails > fail_budget) | (ds < span * 1e-7)))
    else:
        alive &= ~(s < span * (1.0 - 1e-14))
    return t, alive


def _g_family(xi, d, kind, t, alive, g_from, g_to, sch, lscale):
    """March the coupling from g_from to g_to at fixed levels."""
    L = len(t)
    xi_c = np.broadcast_to(np.asarray(xi, dtype=complex), (L, len(xi)))

    def drds(s, tt):
        return np.broadcast_to((-1.0 / (g_from + s) ** 2)[:, None], tt.shape).astype(complex)

    return _batch_march_family(
        xi_of=lambda s: xi_c, drds_of=drds, g_of=lambda s: g_from + s,
        d=d, kind=kind, t=t, alive=alive, s_to=g_to - g_from, sch=sch, lscale=lscale,
    )


def _relax_family(xi_real, delta, d, kind, t, alive, g, sch, lscale):
    """Shrink the level deformation: xi(s) = xi + i(1-s) delta, s: 0 -> 1."""
    def xi_of(s):
        return xi_real[None, :] + 1j * (1.0 - s)[:, None] * delta[None, :]

    def drds(s, tt):
        A = tt[:, :, None] - xi_of(s)[:, None, :]
        dd = (d * delta)[None, None, :]
        if kind == "rational":
            return -(1j * dd / A**2).sum(axis=2)
        return -(1j * dd / np.sin(A) ** 2).sum(axis=2)

    return _batch_march_family(
        xi_of=xi_of, drds_of=drds, g_of=lambda s: g,
        d=d, kind=kind, t=t, alive=alive, s_to=1.0, sch=sch, lscale=lscale,
        fail_budget=14,
    )


def _batch_spectrum(model: PairingModel, labels: list[StateLabel],
                    sch: ContinuationSchedule) -> list[RootSet | None]:
    xi = np.asarray(model.levels, dtype=complex)
    d = np.asarray(model.degeneracies, dtype=float)
    kind = model.kind
    lscale = model.level_scale
    L = len(labels)
    t = np.zeros((L, model.pairs), dtype=complex)
    alive = np.zeros(L, dtype=bool)
    # root pairs merge and go complex at generic couplings on real levels, so
    # march on deformed levels from the start and relax the deformation at
    # the target; a second attempt widens the deformation for the stragglers
    pending = np.arange(L)
    offsets = _deformation_offsets(model.n_levels)
    shuffler = np.random.default_rng(12902)
    for attempt in range(3):
        if attempt:
            offsets = shuffler.permutation(offsets)
        delta = sch.deformation_epsilon * (1.6 ** attempt) * offsets
        xi_d = xi + 1j * delta
        dmod = model.with_levels(tuple(xi_d))
        t2 = np.stack([seed_roots(dmod, labels[q], sch.g_start) for q in pending])
        alive2 = np.ones(len(pending), dtype=bool)
        t2, alive2 = _batch_newton(xi_d, d, sch.g_start, kind, t2, sch.newton_tol, alive2)
        t2, alive2 = _g_family(xi_d, d, kind, t2, alive2, sch.g_start, sch.g_target, sch, lscale)
        t2, alive2 = _relax_family(np.real(xi), delta, d, kind, t2, alive2,
                                   sch.g_target, sch, lscale)
        t[pending[alive2]] = t2[alive2]
        alive[pending[alive2]] = True
        pending = pending[~alive2]
        if len(pending) == 0:
            break

    out: list[RootSet | None] = []
    for q in range(L):
        if not alive[q]:
            out.append(None)
            continue
        try:
            out.append(_finalize(model.with_coupling(sch.g_target), t[q], sch,
                                 {"deformed": False, "batched": True}))
        except SolverError:
            out.append(None)
    return out


def full_spectrum(model: PairingModel, schedule: ContinuationSchedule | None = None,
                  batch: bool = True) -> list[RootSet]:
    """Continue every StateLabel branch; returns RootSets in label order."""
    labels = enumerate_labels(model)
    sch = (schedule or ContinuationSchedule(g_target=model.coupling)).resolved(model)
    if model.pairs == 0:
        return [RootSet((), model.coupling, 0.0, True, {})]
    results: list[RootSet | None] = [None] * len(labels)
    if batch and len(labels) > 1:
        results = _batch_spectrum(model, labels, sch)
    for k, lab in enumerate(labels):
        if results[k] is None:
            results[k] = continue_in_g(model, lab, sch)
    _rescue_duplicates(model, labels, results, sch)
    return results  # type: ignore[return-value]


def _root_key(roots, scale):
    z = np.sort_complex(np.asarray(roots, dtype=complex))
    q = max(scale, 1e-30) * 1e-7
    return tuple((round(float(x.real) / q), round(float(x.imag) / q)) for x in z)


def _rescue_duplicates(model, labels, results, sch):
    """Distinct labels must land on distinct root sets. Continuation can
    occasionally drop two branches into one basin near a root collision;
    when that happens, re-run the colliding labels down the cautious scalar
    path with a fresh deformation until the multisets separate."""
    scale = model.level_scale
    for attempt in range(3):
        seen: dict[tuple, int] = {}
        clashes: list[int] = []
        for k, rs in enumerate(results):
            key = _root_key(rs.roots, scale)
            if key in seen:
                clashes.extend([seen[key], k])
            else:
                seen[key] = k
        if not clashes:
            return
        eps = sch.deformation_epsilon * (1.7 ** (attempt + 1))
        cautious = ContinuationSchedule(
            g_target=sch.g_target, g_start=sch.g_start,
            max_step=sch.max_step * 0.3, min_step=sch.min_step,
            newton_tol=sch.newton_tol, max_newton_iters=sch.max_newton_iters,
            deformation_epsilon=eps).resolved(model)
        for k in sorted(set(clashes)):
            try:
                results[k] = continue_in_g(model, labels[k], cautious)
            except SolverError:
                pass
    seen = {}
    for k, rs in enumerate(results):
        key = _root_key(rs.roots, scale)
        if key in seen:
            rs.meta["duplicate_of"] = seen[key]
        else:
            seen[key] = k
