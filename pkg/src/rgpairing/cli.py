"""Command-line front end: config ingestion, run orchestration, and
machine-readable result emission.

Commands
    solve       continue the configured state to its coupling; write the
                roots, the total energy, and the one-body eigenvalues
    correlate   solve, then emit every determinant correlator as CSV plus
                a JSON summary carrying the conservation and
                energy-identity residuals
    verify      PASS/FAIL check groups against brute-force references
                (``--oracle``, ``--sixvertex``, ``--kz``, ``--continuum``;
                no toggle runs all four)
    sweep       warm-started coupling sweep with a root-collision
                diagnostic column
    continuum   finite-size ground-state energy densities against the
                continuum energy density

Exit codes: 0 success, 1 configuration error, 2 numerical failure,
3 verification failure.

Model configs are JSON objects with keys ``levels``, ``pairs``,
``coupling`` and optional ``degeneracies``, ``kind``, ``label`` (list of
occupied level indices), ``sweep`` (either ``{"grid": [...]}`` or
``{"start":, "stop":, "points":}``), and for the continuum command
``filling`` and ``sizes``.  Every emitted number uses 17 significant
digits, JSON keys are sorted, CSV column order is fixed by the header
row, and nothing except config, flags, and seed enters the output, so
reruns are byte-identical.  Non-finite floats are serialized into JSON
as quoted strings.  Sweep points run sequentially in grid order because
each point warm-starts from its left neighbor.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import analysis, correlators, oracle, sixvertex, solver
from . import model as model_mod
from .model import PairingModel

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERIC = 2
EXIT_VERIFY = 3

# Sector dimension above which the full-spectrum cross-check is skipped.
SPECTRUM_DIM_CAP = 5000
# Lab size cap for the vertex-model checks inside `verify`.
VERTEX_SITE_CAP = 6


class ConfigError(Exception):
    """Malformed config file, flags, or model validation failure."""


# --- deterministic formatting ------------------------------------------------

def _fmt(x) -> str:
    return format(float(x), ".17g")


def _json_text(value, indent: int = 0) -> str:
    pad = "  " * indent
    if isinstance(value, dict):
        if not value:
            return "{}"
        rows = [
            '%s  %s: %s' % (pad, json.dumps(str(k)), _json_text(value[k], indent + 1))
            for k in sorted(value)
        ]
        return "{\n" + ",\n".join(rows) + "\n" + pad + "}"
    if isinstance(value, (list, tuple)):
        if not value:
            return "[]"
        rows = ["%s  %s" % (pad, _json_text(v, indent + 1)) for v in value]
        return "[\n" + ",\n".join(rows) + "\n" + pad + "]"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return _fmt(v) if np.isfinite(v) else json.dumps(_fmt(v))
    if value is None:
        return "null"
    return json.dumps(str(value))


def _emit(path: str | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _summary_path(out: str | None) -> str | None:
    if out is None:
        return None
    return out[:-4] + ".json" if out.endswith(".csv") else out + ".json"


# --- config ingestion --------------------------------------------------------

def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        cfg = model_mod.load_config(path)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError("cannot read config %s: %s" % (path, exc)) from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    return cfg


def _model_from_config(cfg: dict) -> PairingModel:
    try:
        model = model_mod.from_config(cfg)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError("bad model config: %s" % exc) from exc
    report = model_mod.validate(model)
    if not report:
        raise ConfigError("model validation failed: " + "; ".join(report.violations))
    return model


def _label_from_config(cfg: dict, model: PairingModel) -> solver.StateLabel | None:
    raw = cfg.get("label")
    if raw is None:
        return None
    try:
        label = solver.StateLabel(tuple(int(a) for a in raw))
    except (TypeError, ValueError) as exc:
        raise ConfigError("bad label: %s" % exc) from exc
    mult = label.multiplicities(model.n_levels)
    if len(label.occupied_levels) != model.pairs:
        raise ConfigError("label must place exactly %d pairs" % model.pairs)
    if any(a < 0 or a >= model.n_levels for a in label.occupied_levels):
        raise ConfigError("label level index out of range")
    if any(m > d for m, d in zip(mult, model.degeneracies)):
        raise ConfigError("label exceeds a level capacity")
    return label


def _sweep_grid(cfg: dict) -> list[float]:
    block = cfg.get("sweep")
    if not isinstance(block, dict):
        raise ConfigError('sweep needs a config block "sweep"')
    if "grid" in block:
        grid = [float(g) for g in block["grid"]]
    else:
        try:
            start, stop = float(block["start"]), float(block["stop"])
            points = int(block["points"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError("bad sweep block: %s" % exc) from exc
        if points < 2:
            raise ConfigError("sweep needs at least two points")
        grid = list(np.linspace(start, stop, points))
    if any(g <= 0 for g in grid) or any(b <= a for a, b in zip(grid, grid[1:])):
        raise ConfigError("sweep grid must be positive and strictly increasing")
    return grid


# --- solve -------------------------------------------------------------------

def solve_state(model: PairingModel, label: solver.StateLabel | None = None):
    """Roots of the configured state plus the CSV rows describing it."""
    rs = solver.continue_in_g(model, label=label)
    return rs, _solve_csv(model, rs)


def _solve_csv(model: PairingModel, rs) -> str:
    lines = ["kind,index,real,imag"]
    for i, root in enumerate(rs.roots):
        lines.append("root,%d,%s,%s" % (i, _fmt(root.real), _fmt(root.imag)))
    total = complex(sum(rs.roots))
    lines.append("energy,0,%s,%s" % (_fmt(total.real), _fmt(total.imag)))
    try:
        for i, val in enumerate(solver.gaudin_eigenvalues(model, rs)):
            lines.append("gaudin,%d,%s,0" % (i, _fmt(val)))
    except ValueError:
        pass  # one-body eigenvalues are defined for spin-1/2 levels only
    return "\n".join(lines) + "\n"


def cmd_solve(args) -> int:
    cfg = _load_config(args.config)
    if not cfg:
        raise ConfigError("solve requires --config")
    model = _model_from_config(cfg)
    label = _label_from_config(cfg, model)
    try:
        rs, csv_text = solve_state(model, label)
    except solver.SolverError as exc:
        sys.stderr.write("solver failure: %s\n" % exc)
        dump = getattr(exc, "roots", None)
        if dump is not None:
            lines = ["kind,index,real,imag"]
            for i, root in enumerate(np.asarray(dump, dtype=complex)):
                lines.append("last_iterate,%d,%s,%s"
                             % (i, _fmt(root.real), _fmt(root.imag)))
            _emit(args.out, "\n".join(lines) + "\n")
        return EXIT_NUMERIC
    _emit(args.out, csv_text)
    return EXIT_OK


# --- correlate ----------------------------------------------------------------

def correlate_tables(model: PairingModel, rs) -> tuple[str, dict]:
    """CSV of every correlator block plus the identity-residual summary."""
    report = correlators.correlator_report(model, rs)
    lines = ["correlator,i,j,value"]
    n = model.n_levels
    for i in range(n):
        lines.append("occupation,%d,%d,%s" % (i, i, _fmt(report.occupations[i])))
    for name, table in (("pair_transfer", report.pair_transfer),
                        ("density_density", report.density_density),
                        ("spin_spin", report.spin_spin)):
        for i in range(n):
            for j in range(n):
                lines.append("%s,%d,%d,%s" % (name, i, j, _fmt(table[i, j])))
    lines.append("pairing,0,0,%s" % _fmt(report.pairing))
    energy = solver.energy(rs)
    weighted = float(np.dot(np.asarray(model.levels, dtype=float),
                            report.occupations))
    summary = {
        "pairs": model.pairs,
        "energy": energy,
        "conservation_residual": abs(float(np.sum(report.occupations)) - model.pairs),
        "energy_identity_residual": abs(energy - (weighted - model.coupling * report.pairing)),
        "imag_leakage": report.imag_leakage,
        "root_residual": rs.residual,
    }
    return "\n".join(lines) + "\n", summary


def cmd_correlate(args) -> int:
    cfg = _load_config(args.config)
    if not cfg:
        raise ConfigError("correlate requires --config")
    model = _model_from_config(cfg)
    label = _label_from_config(cfg, model)
    try:
        rs = solver.continue_in_g(model, label=label)
        csv_text, summary = correlate_tables(model, rs)
    except (solver.SolverError, correlators.CorrelatorError) as exc:
        sys.stderr.write("numerical failure: %s\n" % exc)
        return EXIT_NUMERIC
    _emit(args.out, csv_text)
    _emit(_summary_path(args.out), _json_text(summary) + "\n")
    return EXIT_OK


# --- sweep --------------------------------------------------------------------

def _min_pair_distance(roots) -> float:
    t = np.asarray(list(roots), dtype=complex)
    if t.size < 2:
        return float("inf")
    diff = np.abs(t[:, None] - t[None, :])
    return float(np.min(diff[np.triu_indices(t.size, 1)]))


def run_sweep(model: PairingModel, grid, warm: bool = True):
    """Per-coupling rows (energy, condensate, collision diagnostic).

    warm reuses each point's roots to seed the next; the cold path
    restarts the continuation from the free limit at every point.  Both
    report the summed Newton iteration count for comparison.
    """
    rows = []
    iters_total = 0
    seed = None
    for g in grid:
        m_g = model.with_coupling(float(g))
        rs = None
        try:
            if warm and seed is not None:
                rs = solver.solve_at_g(m_g, seed)
                if rs.residual > 1e-8 * max(1.0, model.level_scale):
                    rs = None
            if rs is None:
                rs = solver.continue_in_g(m_g)
        except solver.SolverError:
            rs = None
        if rs is None:
            rows.append({"coupling": float(g), "energy": float("nan"),
                         "pairing": float("nan"), "min_root_distance": float("nan"),
                         "status": "failed"})
            continue
        iters_total += rs.meta.get("newton_iters_total", rs.meta.get("newton_iters", 0))
        seed = rs.roots
        pairing = correlators.pairing_amplitude(m_g, rs)
        rows.append({
            "coupling": float(g),
            "energy": solver.energy(rs),
            "pairing": pairing,
            "min_root_distance": _min_pair_distance(rs.roots),
            "status": "ok",
        })
    stats = {
        "points": len(rows),
        "succeeded": sum(1 for r in rows if r["status"] == "ok"),
        "newton_iters_total": iters_total,
        "warm": warm,
    }
    return rows, stats


def cmd_sweep(args) -> int:
    cfg = _load_config(args.config)
    if not cfg:
        raise ConfigError("sweep requires --config")
    model = _model_from_config(cfg)
    grid = _sweep_grid(cfg)
    rows, stats = run_sweep(model, grid, warm=True)
    lines = ["coupling,energy,pairing,min_root_distance,status"]
    for r in rows:
        lines.append("%s,%s,%s,%s,%s" % (_fmt(r["coupling"]), _fmt(r["energy"]),
                                         _fmt(r["pairing"]),
                                         _fmt(r["min_root_distance"]), r["status"]))
    _emit(args.out, "\n".join(lines) + "\n")
    _emit(_summary_path(args.out), _json_text(stats) + "\n")
    return EXIT_OK if stats["succeeded"] >= 0.9 * stats["points"] else EXIT_NUMERIC


# --- verify --------------------------------------------------------------------

def _default_model(seed: int) -> PairingModel:
    """Deterministic small random instance for config-less verification."""
    rng = np.random.default_rng(seed)
    while True:
        levels = np.sort(rng.uniform(0.0, 2.0, 4))
        if np.min(np.diff(levels)) > 0.15:
            break
    return PairingModel(levels=[float(x) for x in levels], pairs=2,
                        coupling=float(rng.uniform(0.3, 0.9)))


def _oracle_checks(model: PairingModel, rng, tol: float) -> list[tuple[str, float, float]]:
    checks = []
    rs = solver.continue_in_g(model)
    scale = max(1.0, model.level_scale)
    checks.append(("oracle.root_residual", rs.residual, 1e-9 * scale))

    basis = oracle.sector_basis(model)
    if basis.dim <= SPECTRUM_DIM_CAP and (model.kind == "rational" or model.all_spin_half):
        ed = oracle.ed_spectrum(oracle.hamiltonian_matrix(model))
        branches = solver.full_spectrum(model)
        if model.kind == "rational":
            mine = np.sort([r.energy for r in branches])
        else:
            # trig eigenvalues are the level-weighted one-body sums, which
            # stay put when any root drifts by a period during continuation
            xi = np.asarray(model.levels, dtype=float)
            mine = np.sort([float(xi @ solver.gaudin_eigenvalues(model, r))
                            for r in branches])
        rel = float(np.max(np.abs(np.sort(ed) - mine)) / max(1.0, np.max(np.abs(ed))))
        checks.append(("oracle.spectrum", rel, 1e-8))

    if model.all_spin_half and model.kind == "rational":
        state = oracle.sigma_plus_state(model, rs.roots)
        bilinear = complex(np.sum(state * state))
        det = correlators.norm_matrix(model, rs).det_value
        checks.append(("oracle.norm",
                       abs(det - bilinear) / max(1.0, abs(bilinear)), 1e-9))

        # oracle.expectation already divides by the state norm
        report = correlators.correlator_report(model, rs)
        worst = 0.0
        for a in range(model.n_levels):
            ed_occ = oracle.expectation(state, oracle.number_op(model, a)).real
            worst = max(worst, abs(report.occupations[a] - ed_occ))
        i, j = 0, model.n_levels - 1
        for mat, op in (
            (report.pair_transfer, oracle.hop_op(model, i, j)),
            (report.density_density,
             oracle.number_op(model, i).matrix @ oracle.number_op(model, j).matrix),
            (report.spin_spin, oracle.sigma_dot_op(model, i, j)),
        ):
            ed_val = oracle.expectation(state, op).real
            worst = max(worst, abs(mat[i, j] - ed_val))
        ed_pair = oracle.expectation(state, oracle.pair_amp_op(model)).real
        worst = max(worst, abs(report.pairing - ed_pair))
        checks.append(("oracle.correlators", worst, 1e-8))

        checks.append(("oracle.conservation",
                       abs(float(np.sum(report.occupations)) - model.pairs), 1e-10))
        weighted = float(np.dot(np.asarray(model.levels, dtype=float), report.occupations))
        checks.append(("oracle.energy_identity",
                       abs(solver.energy(rs) - (weighted - model.coupling * report.pairing)),
                       1e-9))

        if model.n_levels <= 5 and model.pairs >= 1:
            t_off = (np.mean(model.levels)
                     + model.level_scale * (rng.normal(0, 0.4, model.pairs)
                                            + 1j * rng.normal(0, 0.4, model.pairs)))
            out = oracle.hi_action_offshell(model, list(t_off), 0)
            checks.append(("oracle.offshell_decomposition",
                           out["relative_residual"], 1e-9))
    return checks


def _sixvertex_checks(model: PairingModel, rng, tol: float) -> list[tuple[str, float, float]]:
    checks = []
    worst_yb = 0.0
    for _ in range(20):
        t1, t2, t3, eta = rng.uniform(-1.5, 1.5, 4)
        worst_yb = max(worst_yb,
                       sixvertex.yang_baxter_residual(t1, t2, t3, eta + 0.5))
    checks.append(("sixvertex.yang_baxter", worst_yb, 1e-12))

    if model.kind != "rational":
        return checks
    k = min(model.n_levels, VERTEX_SITE_CAP)
    levels = tuple(float(np.real(x)) for x in model.levels[:k])
    g = model.coupling
    eta = 0.31
    params = sixvertex.SixVertexParams(eta=eta, levels=levels,
                                       twist=eta / (2.0 * g * k))
    probe = max(levels) + 0.37 + 0.29j
    rep = sixvertex.verify_fbasis(params, probe, tolerance=tol)
    checks.append(("sixvertex.fbasis", max(rep.residuals.values()), tol))

    sub = PairingModel(levels=levels, pairs=max(1, k // 2), coupling=g)
    # off-shell points: the linear term of the eta expansion carries a
    # factor of the Bethe residual, so on-shell roots would show the
    # next-order (quartering) rate instead of the generic halving
    points = np.asarray(solver.continue_in_g(sub).roots) + (0.11 + 0.07j)
    f_vals = solver.residual(sub, points)

    def eta_error(e: float) -> float:
        p = sixvertex.SixVertexParams(eta=e, levels=levels, twist=e / (2.0 * g * k))
        return float(np.max(np.abs(sixvertex.ba_residual(p, g, points) / e + f_vals)))

    ratio = eta_error(1e-3) / eta_error(5e-4)
    checks.append(("sixvertex.residual_halving", abs(ratio - 2.0), 0.4))

    def transfer_gap(e: float) -> float:
        p = sixvertex.SixVertexParams(eta=e, levels=levels, twist=e / (2.0 * g * k))
        avg = 0.5 * (sixvertex.monodromy(p, probe).transfer()
                     + sixvertex.monodromy(
                         sixvertex.SixVertexParams(eta=-e, levels=levels,
                                                   twist=-e / (2.0 * g * k)),
                         probe).transfer())
        norm = np.prod([x - probe for x in levels])
        return float(np.max(np.abs(avg / norm - 2.0 * np.eye(2 ** k))))

    quart = transfer_gap(1e-3) / transfer_gap(5e-4)
    checks.append(("sixvertex.transfer_quartering", abs(quart - 4.0), 0.8))
    return checks


def _kz_checks(model: PairingModel, rng, tol: float) -> list[tuple[str, float, float]]:
    checks = []
    if model.kind != "rational":
        return checks
    center = float(np.mean(np.real(model.levels)))
    spread = max(model.level_scale, 1.0)
    worst = 0.0
    points = []
    while len(points) < 20:
        pt = center + spread * (rng.normal(0, 0.5, model.pairs)
                                + 1j * rng.normal(0, 0.5, model.pairs))
        try:
            ev = analysis.chi_evaluate(pt, model)
        except analysis.AnalysisError:
            continue
        points.append(pt)
        worst = max(worst, ev.max_root_residual, ev.max_level_residual)
    checks.append(("kz.first_order_systems", worst, analysis.FD_TOL))

    rep = analysis.kz_residual(points[0], model, gamma=2.0)
    checks.append(("kz.compatibility",
                   max(rep.mixed_fd_agreement, rep.mixed_vs_exact), analysis.FD_TOL))
    checks.append(("kz.gamma_rescaling", rep.gamma_residual, analysis.FD_TOL))

    if model.pairs:
        rs = solver.continue_in_g(model)
        ev = analysis.chi_evaluate(rs, model)
        checks.append(("kz.stationarity", ev.max_root_residual,
                       analysis.STATIONARITY_TOL))
    return checks


def _continuum_checks(model: PairingModel, rng, tol: float) -> list[tuple[str, float, float]]:
    checks = []
    worst = 0.0
    for g in (0.2, 0.5, 1.0, 2.0):
        sol = analysis.gap_solve(g, 0.5)
        worst = max(worst, abs(sol.gap - analysis.half_filling_gap(g)),
                    sol.gap_residual, sol.number_residual)
    checks.append(("continuum.gap_closed_form", worst, 1e-10))
    return checks


_VERIFY_GROUPS = {
    "oracle": _oracle_checks,
    "sixvertex": _sixvertex_checks,
    "kz": _kz_checks,
    "continuum": _continuum_checks,
}


def run_verification(model: PairingModel, groups, seed: int, tol: float):
    """(name, value, threshold, passed) rows for the requested groups."""
    rng = np.random.default_rng(seed)
    rows = []
    for group in groups:
        for name, value, threshold in _VERIFY_GROUPS[group](model, rng, tol):
            rows.append((name, float(value), float(threshold),
                         bool(value <= threshold)))
    return rows


def cmd_verify(args) -> int:
    cfg = _load_config(args.config)
    model = _model_from_config(cfg) if cfg else _default_model(args.seed)
    groups = [g for g in ("oracle", "sixvertex", "kz", "continuum")
              if getattr(args, g)]
    if not groups:
        groups = ["oracle", "sixvertex", "kz", "continuum"]
    try:
        rows = run_verification(model, groups, args.seed, args.tol)
    except (solver.SolverError, np.linalg.LinAlgError, ValueError) as exc:
        sys.stderr.write("numerical failure: %s\n" % exc)
        return EXIT_NUMERIC
    lines = []
    for name, value, threshold, ok in rows:
        lines.append("%s %s value=%s threshold=%s"
                     % ("PASS" if ok else "FAIL", name, _fmt(value), _fmt(threshold)))
    failed = sum(1 for r in rows if not r[3])
    lines.append("checks=%d failed=%d" % (len(rows), failed))
    _emit(args.out, "\n".join(lines) + "\n")
    return EXIT_OK if failed == 0 else EXIT_VERIFY


# --- continuum ------------------------------------------------------------------

def continuum_table(coupling: float, filling: float, sizes):
    cmp = analysis.continuum_compare(coupling, sizes, filling)
    lines = ["n,energy_per_level,deviation"]
    for n, e_per, dev in cmp.rows:
        lines.append("%d,%s,%s" % (n, _fmt(e_per), _fmt(dev)))
    summary = {
        "coupling": coupling,
        "filling": filling,
        "gap": cmp.solution.gap,
        "center": cmp.solution.center,
        "energy_density": cmp.solution.energy_density,
        "monotone": cmp.monotone,
        "rate_consistent": cmp.rate_consistent,
        "deviation_signs": list(cmp.deviation_signs),
        "passed": cmp.passed,
    }
    return "\n".join(lines) + "\n", summary


def cmd_continuum(args) -> int:
    cfg = _load_config(args.config)
    coupling = float(cfg.get("coupling", 0.6))
    filling = float(cfg.get("filling", 0.5))
    sizes = [int(n) for n in cfg.get("sizes", (8, 16, 32, 64))]
    try:
        csv_text, summary = continuum_table(coupling, filling, sizes)
    except analysis.AnalysisError as exc:
        raise ConfigError(str(exc)) from exc
    except solver.SolverError as exc:
        sys.stderr.write("numerical failure: %s\n" % exc)
        return EXIT_NUMERIC
    _emit(args.out, csv_text)
    _emit(_summary_path(args.out), _json_text(summary) + "\n")
    return EXIT_OK if summary["passed"] else EXIT_VERIFY


# --- entry point -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rgpairing",
        description="Bethe-root continuation, determinant correlators, and "
                    "brute-force verification for the reduced pairing model.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (("solve", cmd_solve), ("correlate", cmd_correlate),
                     ("verify", cmd_verify), ("sweep", cmd_sweep),
                     ("continuum", cmd_continuum)):
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="JSON model config")
        p.add_argument("--out", default=None,
                       help="output path (stdout when omitted; JSON summaries "
                            "go to the same name with a .json suffix)")
        p.add_argument("--seed", type=int, default=0, help="verification draw seed")
        p.add_argument("--tol", type=float, default=1e-10,
                       help="residual tolerance for basis-change checks")
        p.set_defaults(handler=fn)
        if name == "verify":
            for toggle in ("oracle", "sixvertex", "kz", "continuum"):
                p.add_argument("--" + toggle, action="store_true",
                               help="run only the selected check groups")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except ConfigError as exc:
        sys.stderr.write("config error: %s\n" % exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
