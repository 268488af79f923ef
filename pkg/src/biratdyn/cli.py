"""Command-line experiment runner for plane birational dynamics.

Subcommands
-----------

``inspect``
    Exact structure of a map: degree growth, indeterminacy and critical
    loci, inverse verification.
``stability``
    Orbit-separation check plus forward/backward summability of
    indeterminacy-distance series at the certified expansion rate.
``green``
    Truncated invariant potential sampled on an affine grid, written as
    a 16-bit binary PGM with an affine-scale sidecar, a CSV grid, and a
    functional-equation residual table.
``measure``
    Saddle-orbit point cloud with exact weights, observable averages,
    invariance residuals, and mixing correlations.
``lyapunov``
    Cocycle exponents over the saddle cloud with standard errors, the
    volume-identity cross-check, an integrability diagnostic, and the
    hyperbolicity verdict.
``energy-selftest``
    Map-free validation suite for the quadratic energy kernel:
    monotonicity residuals, Cauchy decay with a singular negative
    control, and a pushforward invariance check.

Exit codes: 0 success; 2 input validation failure (unreadable or
malformed map/config, bad flag values); 3 precondition failure (no
expansion, uncertifiable growth rate, no saddles, missing inverse);
4 numerically inconclusive (all orbits excluded, indeterminacy hits).

Every JSON report embeds the tool name and version, the seed, the
active tolerances, and the exact rational coefficients of the map, so
a report is reproducible from its own header.  All artifacts are
byte-deterministic for identical inputs, configuration, and seed.
"""

from __future__ import annotations

import argparse
import json
import math
import re
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .cohomology import NoExpansion, SpectralError, lattice_for_plane_map, spectral_data
from .energy import (
    DiscreteForm11,
    EnergyError,
    GridChart,
    cauchy_diagnostic,
    constant_function,
    energy_monotonicity_check,
    log_distance,
    pushforward_energy_check,
    random_trig,
    smoothed_log_form,
)
from .geometry import GeometryError, ProjectivePoint
from .lyapunov import (
    AllOrbitsExcluded,
    LyapunovError,
    cocycle_exponents,
    hyperbolicity_verdict,
)
from .mapfile import ExperimentConfig, MapFileError, load_config, load_map, map_payload
from .maps import RationalSurfaceMap, degree_sequence, verify_inverse
from .measure import (
    IndeterminateEncounter,
    MeasureError,
    NoSaddlesFound,
    coordinate_observables,
    invariance_residual,
    measure_average,
    mixing_correlation,
    saddle_cloud,
)
from .potential import OrbitHitIndeterminacy, PotentialError, green_functional_check, green_grid
from .stability import (
    StabilityError,
    backward_summability,
    check_orbit_separation,
    forward_summability,
    separation_diagnostic,
)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_PRECONDITION = 3
EXIT_INCONCLUSIVE = 4

# Map-free growth-rate reference when the pullback lattice cannot certify
# one (degree sequence drops): the algebraic degree, an a-priori upper
# bound.  Summability at this most favorable rate is still a meaningful
# diagnostic; certification-grade commands refuse instead.
_RHO_SPECTRAL = "spectral"
_RHO_DEGREE = "algebraic-degree"


# ---------------------------------------------------------------------------
# small serialization helpers
# ---------------------------------------------------------------------------


def _json_safe(obj):
    """Replace non-finite floats by strings so reports stay strict JSON."""
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def _write_json(path: Path, doc) -> Path:
    path.write_text(json.dumps(_json_safe(doc), indent=2, sort_keys=True) + "\n")
    print(f"wrote {path}")
    return path


def _write_text(path: Path, text: str) -> Path:
    path.write_text(text)
    print(f"wrote {path}")
    return path


def _exact_point_json(p: ProjectivePoint):
    """Exact projective point as [[re, im], ...] fraction strings."""
    return [[str(c.re), str(c.im)] for c in p.coords]


def _safe_name(f: RationalSurfaceMap) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]", "_", f.name or "map")


def _report_header(command: str, cfg: ExperimentConfig,
                   f: Optional[RationalSurfaceMap] = None) -> dict:
    doc = {
        "tool": {"name": "biratdyn", "version": __version__},
        "command": command,
        "seed": cfg.seed,
        "tolerances": {"indeterminacy": cfg.tolerance_indeterminacy},
    }
    if f is not None:
        doc["map"] = map_payload(f)
    return doc


def _certified_rho(f: RationalSurfaceMap) -> float:
    """Expansion rate from the pullback lattice; raises when uncertifiable."""
    return float(spectral_data(lattice_for_plane_map(f)).rho)


def _rho_with_fallback(f: RationalSurfaceMap) -> tuple[float, str]:
    """Certified rate when available, algebraic degree otherwise.

    ``NoExpansion`` (a certified rate that is not above 1) propagates:
    no fallback can rescue a map with no expansion.
    """
    try:
        return _certified_rho(f), _RHO_SPECTRAL
    except NoExpansion:
        raise
    except SpectralError:
        return float(f.degree), _RHO_DEGREE


def _chart_point(u: float, v: float, chart: int) -> ProjectivePoint:
    coords = [0.0, 0.0, 0.0]
    coords[chart] = 1.0
    others = [k for k in range(3) if k != chart]
    coords[others[0]] = u
    coords[others[1]] = v
    return ProjectivePoint.numeric_point(*coords)


# ---------------------------------------------------------------------------
# PGM output
# ---------------------------------------------------------------------------


def _write_pgm(path: Path, grid: np.ndarray, cfg: ExperimentConfig) -> dict:
    """Binary 16-bit big-endian PGM plus an affine-scale sidecar.

    Pixel values relate to field values by ``value = offset + slope *
    pixel``; non-finite samples (log pits at indeterminacy orbits) are
    clamped to the darkest pixel and counted in the sidecar.
    """
    grid = np.asarray(grid, dtype=float)
    finite = grid[np.isfinite(grid)]
    lo = float(finite.min()) if finite.size else 0.0
    hi = float(finite.max()) if finite.size else 0.0
    span = hi - lo
    nonfinite = int(grid.size - finite.size)
    filled = np.where(np.isfinite(grid), grid, lo)
    if span > 0:
        pixels = np.rint((np.clip(filled, lo, hi) - lo) / span * 65535)
    else:
        pixels = np.zeros_like(filled)
    data = pixels.astype(">u2").tobytes()
    n_rows, n_cols = grid.shape
    header = f"P5\n{n_cols} {n_rows}\n65535\n".encode("ascii")
    path.write_bytes(header + data)
    print(f"wrote {path}")
    sidecar = {
        "format": "PGM P5, 16-bit big-endian, row-major",
        "offset": lo,
        "slope": span / 65535 if span > 0 else 0.0,
        "min": lo,
        "max": hi,
        "nonfinite_pixels": nonfinite,
        "resolution": n_cols,
        "chart": cfg.chart,
        "center": list(cfg.center),
        "halfwidth": cfg.halfwidth,
    }
    _write_json(path.with_name(path.stem + "_scale.json"), sidecar)
    return sidecar


def _grid_csv(grid: np.ndarray, cfg: ExperimentConfig) -> str:
    n = grid.shape[0]
    us = np.linspace(cfg.center[0] - cfg.halfwidth, cfg.center[0] + cfg.halfwidth, n)
    vs = np.linspace(cfg.center[1] - cfg.halfwidth, cfg.center[1] + cfg.halfwidth, n)
    lines = ["u,v,value"]
    for i in range(n):
        for j in range(n):
            lines.append(f"{float(us[j])!r},{float(vs[i])!r},{float(grid[i, j])!r}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# subcommand handlers
# ---------------------------------------------------------------------------


def cmd_inspect(f: RationalSurfaceMap, cfg: ExperimentConfig, out: Path) -> int:
    seq = degree_sequence(f, 5)
    doc = _report_header("inspect", cfg, f)
    doc["degree"] = f.degree
    doc["degree_sequence"] = {
        "degrees": list(seq.degrees),
        "is_multiplicative": seq.is_multiplicative,
        "first_drop": seq.first_drop,
    }
    doc["indeterminacy_forward"] = [_exact_point_json(p) for p in f.indeterminacy_set()]
    doc["indeterminacy_inverse"] = (
        [_exact_point_json(p) for p in f.inverse.indeterminacy_set()]
        if f.inverse is not None else None)
    doc["critical_set"] = [
        {"polynomial": str(poly), "multiplicity": mult} for poly, mult in f.critical_set()
    ]
    doc["inverse_verified"] = verify_inverse(f) if f.inverse is not None else None
    _write_json(out / f"inspect_{_safe_name(f)}.json", doc)
    verified = {True: "inverse verified", False: "INVERSE FAILS", None: "no inverse"}
    print(f"{f.name}: degree {f.degree}, sequence {list(seq.degrees)}, "
          f"{verified[doc['inverse_verified']]}")
    return EXIT_OK


def cmd_stability(f: RationalSurfaceMap, cfg: ExperimentConfig, out: Path) -> int:
    rho, rho_source = _rho_with_fallback(f)
    n = cfg.n_orbit
    tol = cfg.tolerance_indeterminacy
    sep = check_orbit_separation(f, n, eps_indeterminacy=tol)
    fwd = forward_summability(f, rho, n, eps_indeterminacy=tol)
    bwd = (backward_summability(f, rho, n, eps_indeterminacy=tol)
           if f.inverse is not None else None)
    doc = _report_header("stability", cfg, f)
    doc["rho"] = rho
    doc["rho_source"] = rho_source
    doc["n_orbit"] = n
    doc["separation"] = {
        "holds": sep.holds,
        "through": sep.through,
        "fails_at": sep.fails_at,
        "witness": None if sep.witness is None else str(sep.witness),
    }
    doc["forward"] = json.loads(fwd.to_json())
    doc["backward"] = None if bwd is None else json.loads(bwd.to_json())
    doc["separation_diagnostic"] = separation_diagnostic(f, n)
    _write_json(out / f"stability_{_safe_name(f)}.json", doc)
    print(f"separation: {sep}")
    print(f"forward: {fwd.verdict}" + ("" if bwd is None else f", backward: {bwd.verdict}"))
    return EXIT_OK


def cmd_green(f: RationalSurfaceMap, cfg: ExperimentConfig, out: Path) -> int:
    rho, rho_source = _rho_with_fallback(f)
    name = _safe_name(f)
    grid_kwargs = dict(rho=rho, chart=cfg.chart, center=cfg.center,
                       halfwidth=cfg.halfwidth, resolution=cfg.grid)

    def sampled(g: RationalSurfaceMap) -> np.ndarray:
        # depth 0 is the empty partial sum: identically zero
        if cfg.n_series == 0:
            return np.zeros((cfg.grid, cfg.grid))
        return green_grid(g, cfg.n_series, **grid_kwargs)

    grid = sampled(f)
    sidecar = _write_pgm(out / f"green_{name}.pgm", grid, cfg)
    _write_text(out / f"green_{name}.csv", _grid_csv(grid, cfg))

    inverse_sidecar = None
    if f.inverse is not None:
        inverse_sidecar = _write_pgm(out / f"green_{name}_inverse.pgm",
                                     sampled(f.inverse), cfg)

    rng = np.random.default_rng(cfg.seed)
    samples = []
    worst = 0.0
    indeterminate = 0
    for _ in range(16 if cfg.n_series > 0 else 0):
        u = cfg.center[0] + cfg.halfwidth * (2.0 * rng.random() - 1.0)
        v = cfg.center[1] + cfg.halfwidth * (2.0 * rng.random() - 1.0)
        try:
            res = green_functional_check(f, _chart_point(u, v, cfg.chart),
                                         cfg.n_series, rho)
            worst = max(worst, res)
        except OrbitHitIndeterminacy:
            res = None
            indeterminate += 1
        samples.append({"u": u, "v": v, "residual": res})

    doc = _report_header("green", cfg, f)
    doc["rho"] = rho
    doc["rho_source"] = rho_source
    doc["n_series"] = cfg.n_series
    doc["grid"] = sidecar
    doc["inverse_grid"] = inverse_sidecar
    doc["residuals"] = {"samples": samples, "max": worst,
                        "indeterminate": indeterminate}
    _write_json(out / f"green_{name}.json", doc)
    print(f"max functional residual over {16 - indeterminate} samples: {worst!r}")
    return EXIT_OK


def cmd_measure(f: RationalSurfaceMap, cfg: ExperimentConfig, out: Path,
                lags: int) -> int:
    cloud = saddle_cloud(f, cfg.max_period, seed=cfg.seed)
    name = _safe_name(f)
    _write_text(out / f"measure_{name}_cloud.csv", cloud.to_csv())

    observables = []
    for obs in coordinate_observables():
        observables.append({
            "name": obs.name,
            "average": measure_average(cloud, obs.fn),
            "invariance_residual": invariance_residual(f, cloud, obs.fn),
        })
    phi = coordinate_observables()[0]
    mixing = {
        "observable": phi.name,
        "lags": list(range(lags + 1)),
        "values": [mixing_correlation(f, cloud, phi.fn, phi.fn, k)
                   for k in range(lags + 1)],
    }

    doc = _report_header("measure", cfg, f)
    doc["max_period"] = cfg.max_period
    doc["cloud"] = {
        "size": len(cloud.points),
        "provenance": cloud.provenance,
        "total_weight": str(sum(cloud.weights)),
        "periods": list(cloud.periods),
    }
    doc["observables"] = observables
    doc["mixing"] = mixing
    _write_json(out / f"measure_{name}.json", doc)
    print(f"cloud: {len(cloud.points)} saddle points, periods <= {cfg.max_period}")
    return EXIT_OK


def cmd_lyapunov(f: RationalSurfaceMap, cfg: ExperimentConfig, out: Path) -> int:
    rho = _certified_rho(f)  # NoExpansion / SpectralError end the run
    cloud = saddle_cloud(f, cfg.max_period, seed=cfg.seed)
    est = cocycle_exponents(f, cloud, cfg.n_cocycle,
                            exclusion_radius=cfg.tolerance_indeterminacy)
    verdict = hyperbolicity_verdict(est, rho)

    doc = _report_header("lyapunov", cfg, f)
    doc["max_period"] = cfg.max_period
    doc["n_cocycle"] = cfg.n_cocycle
    doc["exclusion_radius"] = cfg.tolerance_indeterminacy
    doc["estimate"] = {
        "chi_plus": est.chi_plus,
        "chi_minus": est.chi_minus,
        "se_plus": est.se_plus,
        "se_minus": est.se_minus,
        "n_steps": est.n_steps,
        "included": est.included,
        "excluded_mass": est.excluded_mass,
        "det_residual": est.det_residual,
        "per_point_plus": list(est.per_point_plus),
        "per_point_minus": list(est.per_point_minus),
        "provenance": est.provenance,
    }
    integ = est.integrability
    doc["integrability"] = None if integ is None else {
        "levels": list(integ.levels),
        "means": list(integ.means),
        "cauchy_gap": integ.cauchy_gap,
        "consistent": integ.consistent,
    }
    doc["verdict"] = {
        "rho": verdict.rho,
        "threshold": verdict.threshold,
        "expanding_ok": verdict.expanding_ok,
        "contracting_ok": verdict.contracting_ok,
        "margin_plus": verdict.margin_plus,
        "margin_minus": verdict.margin_minus,
    }
    _write_json(out / f"lyapunov_{_safe_name(f)}.json", doc)
    print(f"chi+ = {est.chi_plus!r} +- {est.se_plus!r}, "
          f"chi- = {est.chi_minus!r} +- {est.se_minus!r}")
    print(f"hyperbolic: expanding {verdict.expanding_ok}, "
          f"contracting {verdict.contracting_ok}")
    return EXIT_OK


def cmd_energy_selftest(cfg: ExperimentConfig, out: Path, instances: int) -> int:
    origin = ProjectivePoint.exact_point(0, 0, 1)
    beta = DiscreteForm11.euclidean()
    checks = []

    # 1. u <= v must force E(u) <= E(v): residuals of the two comparison
    #    inequalities are nonnegative up to float accumulation.
    chart = GridChart(center=origin, chart=2, halfwidth=0.8, resolution=12)
    min_residual = math.inf
    for k in range(instances):
        v = random_trig(cfg.seed + k)
        u = v + constant_function(-1.0)
        report = energy_monotonicity_check(u, v, beta, chart)
        min_residual = min(min_residual, *report.residuals)
    checks.append({
        "name": "monotonicity",
        "instances": instances,
        "min_residual": min_residual,
        "passed": bool(min_residual >= -1e-8),
    })

    # 2. smoothing a log singularity against a smooth form is Cauchy in
    #    energy; concentrating the form at the singular point (infinite
    #    local potential) is the negative control and must not decay.
    sing = (0.1 + 0.05j, -0.2 + 0.0j)
    box = GridChart(center=origin, chart=2, halfwidth=0.8, resolution=24)
    smooth_diag = cauchy_diagnostic(log_distance(sing), beta, box, levels=range(1, 9))
    control_box = GridChart(center=origin, chart=2, halfwidth=0.8, resolution=32)
    levels = [0.5 + 0.25 * k for k in range(9)]
    concentrated = DiscreteForm11.from_function(
        control_box, smoothed_log_form(sing, control_box.step / 4))
    control_diag = cauchy_diagnostic(log_distance(sing), concentrated,
                                     control_box, levels=levels)
    checks.append({
        "name": "cauchy",
        "smooth_decays": smooth_diag.decays,
        "singular_control_decays": control_diag.decays,
        "passed": bool(smooth_diag.decays and not control_diag.decays),
    })

    # 3. energy against a smooth form is preserved under pushforward by a
    #    birational map when the window avoids the exceptional sets.
    from .standard_maps import henon_map

    h = henon_map()
    window = GridChart(center=origin, chart=2, halfwidth=0.6, resolution=24)
    push = pushforward_energy_check(random_trig(cfg.seed + 100, terms=3,
                                                amplitude=0.5),
                                    h, beta, window)
    checks.append({
        "name": "pushforward",
        "relative_discrepancy": push.relative_discrepancy,
        "passed": bool(push.relative_discrepancy < 0.02),
    })

    all_pass = all(c["passed"] for c in checks)
    doc = _report_header("energy-selftest", cfg)
    doc["checks"] = checks
    doc["all_pass"] = all_pass
    _write_json(out / "energy_selftest.json", doc)
    for c in checks:
        print(f"{c['name']}: {'pass' if c['passed'] else 'FAIL'}")
    return EXIT_OK if all_pass else EXIT_INCONCLUSIVE


# ---------------------------------------------------------------------------
# argument parsing and dispatch
# ---------------------------------------------------------------------------

#: which config field --iters overrides, per subcommand
_ITERS_FIELD = {
    "stability": "n_orbit",
    "green": "n_series",
    "lyapunov": "n_cocycle",
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="biratdyn",
        description="experiment runner for plane birational dynamics")
    sub = parser.add_subparsers(dest="command", required=True)
    specs = [
        ("inspect", "exact structure of a map", True),
        ("stability", "orbit separation and summability", True),
        ("green", "truncated invariant potential on a grid", True),
        ("measure", "saddle-orbit cloud and observable averages", True),
        ("lyapunov", "cocycle exponents and hyperbolicity verdict", True),
        ("energy-selftest", "energy kernel validation suite", False),
    ]
    for name, help_text, needs_map in specs:
        p = sub.add_parser(name, help=help_text)
        if needs_map:
            p.add_argument("--map", required=True, help="map file (JSON)")
        p.add_argument("--config", help="experiment configuration (JSON)")
        p.add_argument("--seed", type=int, help="random seed (0 <= seed < 2^64)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--iters", type=int,
                       help="primary loop count (orbit length / series depth / "
                            "cocycle steps / mixing lags / selftest instances)")
        p.add_argument("--grid", type=int, help="grid resolution")
        p.add_argument("--max-period", type=int,
                       help="largest saddle period to include")
        p.add_argument("--tolerance-indeterminacy", type=float,
                       help="exclusion radius around indeterminacy points")
    return parser


def _resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["out_dir"] = args.out
    if args.grid is not None:
        overrides["grid"] = args.grid
    if args.max_period is not None:
        overrides["max_period"] = args.max_period
    if args.tolerance_indeterminacy is not None:
        overrides["tolerance_indeterminacy"] = args.tolerance_indeterminacy
    field = _ITERS_FIELD.get(args.command)
    if args.iters is not None and field is not None:
        overrides[field] = args.iters
    return cfg.with_overrides(**overrides)


def _dispatch(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.command == "energy-selftest":
        instances = args.iters if args.iters is not None else 8
        if instances < 1:
            raise ValueError("selftest needs at least one instance")
        return cmd_energy_selftest(cfg, out, instances)
    f = load_map(args.map)
    if args.command == "inspect":
        return cmd_inspect(f, cfg, out)
    if args.command == "stability":
        return cmd_stability(f, cfg, out)
    if args.command == "green":
        return cmd_green(f, cfg, out)
    if args.command == "measure":
        lags = args.iters if args.iters is not None else 10
        if lags < 0:
            raise ValueError("mixing lag count must be nonnegative")
        return cmd_measure(f, cfg, out, lags)
    if args.command == "lyapunov":
        return cmd_lyapunov(f, cfg, out)
    raise ValueError(f"unknown command {args.command!r}")


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits itself; fold into our codes
        return EXIT_OK if exc.code in (0, None) else EXIT_VALIDATION
    try:
        return _dispatch(args)
    except (AllOrbitsExcluded, IndeterminateEncounter, StabilityError,
            PotentialError) as exc:
        print(f"inconclusive: {exc}", file=sys.stderr)
        return EXIT_INCONCLUSIVE
    except (NoExpansion, SpectralError, MeasureError, LyapunovError,
            EnergyError) as exc:
        print(f"precondition failed: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except (MapFileError, GeometryError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
