"""On-disk JSON formats: map descriptions and experiment configuration.

A map file stores the three forward components (and optionally the three
inverse components) of a plane map as lists of 7-integer terms

    [i, j, k, re_num, re_den, im_num, im_den]

with ``(i, j, k)`` the exponents of ``(x, y, t)`` and the remaining four
integers the exact rational real and imaginary parts of the coefficient.
Parsing is therefore lossless; saving is deterministic (sorted keys, sorted
terms), so identical maps produce byte-identical files.  An optional
``lattice`` section records the cohomology lattice data (intersection form,
pullback matrices, distinguished classes) as integer matrices.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .cohomology import SpectralError, lattice_for_plane_map
from .geometry import ComplexRational, HomogeneousPolynomial, poly_gcd
from .maps import RationalSurfaceMap, verify_inverse
from .standard_maps import STANDARD_MAPS

__all__ = [
    "MapFileError",
    "ParseError",
    "ExperimentConfig",
    "FORMAT_TAG",
    "map_payload",
    "map_from_payload",
    "save_map",
    "load_map",
    "load_config",
    "write_corpus",
    "corpus_path",
]

FORMAT_TAG = "biratdyn-map/1"


class MapFileError(Exception):
    """Invalid map file or configuration contents."""


class ParseError(MapFileError):
    """Syntactically broken JSON; carries the 1-based line and column."""

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


# ---------------------------------------------------------------------------
# map serialization


def _component_terms(poly: HomogeneousPolynomial) -> list[list[int]]:
    rows = []
    for (i, j, k), coeff in poly.terms.items():
        rows.append(
            [
                int(i),
                int(j),
                int(k),
                int(coeff.re_num),
                int(coeff.re_den),
                int(coeff.im_num),
                int(coeff.im_den),
            ]
        )
    rows.sort(key=lambda r: (r[0], r[1], r[2]))
    return rows


def _triple_payload(f: RationalSurfaceMap) -> list[list[list[int]]]:
    return [_component_terms(c) for c in f.components]


def map_payload(f: RationalSurfaceMap, *, lattice: bool = False) -> dict:
    """JSON-ready dictionary describing a map (losslessly)."""
    payload: dict = {
        "format": FORMAT_TAG,
        "name": f.name,
        "degree": f.degree,
        "forward": _triple_payload(f),
    }
    if f.inverse is not None:
        payload["inverse"] = _triple_payload(f.inverse)
    if lattice:
        L = lattice_for_plane_map(f)
        payload["lattice"] = {
            "rank": int(L.rank),
            "Q": np.asarray(L.Q, dtype=int).tolist(),
            "Mf": np.asarray(L.Mf, dtype=int).tolist(),
            "Mfinv": np.asarray(L.Mfinv, dtype=int).tolist(),
            "curve_classes": [
                np.asarray(v, dtype=int).tolist() for v in L.curve_classes
            ],
            "beta_class": np.asarray(L.beta_class, dtype=int).tolist(),
        }
    return payload


def _parse_component(rows, degree: int, where: str) -> HomogeneousPolynomial:
    if not isinstance(rows, list) or not rows:
        raise MapFileError(f"{where}: each component needs a nonempty term list")
    terms: dict[tuple[int, int, int], ComplexRational] = {}
    for row in rows:
        if not isinstance(row, list) or len(row) != 7:
            raise MapFileError(f"{where}: each term must be a list of 7 integers")
        if not all(isinstance(x, int) and not isinstance(x, bool) for x in row):
            raise MapFileError(f"{where}: each term must be a list of 7 integers")
        i, j, k, re_num, re_den, im_num, im_den = row
        if min(i, j, k) < 0:
            raise MapFileError(f"{where}: exponents must be nonnegative")
        if i + j + k != degree:
            raise MapFileError(
                f"{where}: exponents ({i},{j},{k}) do not sum to the degree {degree}"
            )
        if re_den == 0 or im_den == 0:
            raise MapFileError(f"{where}: zero denominator in coefficient")
        if (i, j, k) in terms:
            raise MapFileError(f"{where}: duplicate exponent triple ({i},{j},{k})")
        coeff = ComplexRational.from_quadruple(re_num, re_den, im_num, im_den)
        if coeff.is_zero():
            raise MapFileError(f"{where}: zero coefficient on ({i},{j},{k})")
        terms[(i, j, k)] = coeff
    return HomogeneousPolynomial(degree, terms)


def _parse_triple(data, degree: int, where: str) -> tuple[HomogeneousPolynomial, ...]:
    if not isinstance(data, list) or len(data) != 3:
        raise MapFileError(f"{where}: expected exactly 3 polynomial components")
    comps = tuple(
        _parse_component(rows, degree, f"{where}[{idx}]")
        for idx, rows in enumerate(data)
    )
    g = poly_gcd(list(comps))
    if g.degree > 0:
        raise MapFileError(f"{where}: components share a common factor of degree {g.degree}")
    return comps


def _triple_degree(data, where: str) -> int:
    try:
        first = data[0][0]
        return int(first[0]) + int(first[1]) + int(first[2])
    except (TypeError, IndexError, KeyError, ValueError):
        raise MapFileError(f"{where}: cannot infer the component degree") from None


def map_from_payload(payload: dict) -> RationalSurfaceMap:
    """Validate a parsed JSON document and build the map it describes."""
    if not isinstance(payload, dict):
        raise MapFileError("map file must contain a JSON object")
    for key in ("name", "degree", "forward"):
        if key not in payload:
            raise MapFileError(f"map file is missing the required field {key!r}")
    name = payload["name"]
    if not isinstance(name, str) or not name:
        raise MapFileError("name must be a nonempty string")
    degree = payload["degree"]
    if not isinstance(degree, int) or degree < 1:
        raise MapFileError("degree must be a positive integer")
    forward = _parse_triple(payload["forward"], degree, "forward")
    inverse_map: Optional[RationalSurfaceMap] = None
    if payload.get("inverse") is not None:
        inv_degree = _triple_degree(payload["inverse"], "inverse")
        inverse = _parse_triple(payload["inverse"], inv_degree, "inverse")
        inverse_map = RationalSurfaceMap(inverse, name=f"{name}^-1")
    f = RationalSurfaceMap(forward, inverse=inverse_map, name=name)
    if inverse_map is not None:
        if not verify_inverse(f):
            raise MapFileError("inverse triple fails verification against the forward map")
        # Wire the back-reference so orbits of the inverse map (which need
        # *its* inverse, i.e. the forward triple) work on loaded maps too.
        inverse_map.inverse = RationalSurfaceMap(forward, name=name)
    return f


def save_map(f: RationalSurfaceMap, path: Union[str, Path], *, lattice: bool = False) -> Path:
    """Write a map file; byte-identical output for identical maps."""
    path = Path(path)
    payload = map_payload(f, lattice=lattice)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path


def _read_json(path: Union[str, Path]):
    text = Path(path).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as err:
        raise ParseError(err.msg, err.lineno, err.colno) from None


def load_map(path: Union[str, Path]) -> RationalSurfaceMap:
    """Parse and validate a map file."""
    return map_from_payload(_read_json(path))


def write_corpus(directory: Union[str, Path]) -> list[Path]:
    """Write the bundled example maps to a directory.

    Maps whose degree sequence is multiplicative get a lattice section; for
    the others (a dropping degree sequence means the hyperplane-class
    pullback matrix does not represent the dynamics) it is omitted.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for name, factory in STANDARD_MAPS.items():
        f = factory()
        try:
            written.append(save_map(f, directory / f"{name}.map", lattice=True))
        except SpectralError:
            written.append(save_map(f, directory / f"{name}.map", lattice=False))
    return written


def corpus_path(name: str) -> Path:
    """Path to a bundled example map: cremona, henon, linear, or lsigma."""
    path = Path(__file__).parent / "corpus" / f"{name}.map"
    if not path.exists():
        raise MapFileError(f"no bundled map named {name!r}")
    return path


# ---------------------------------------------------------------------------
# experiment configuration


@dataclass(frozen=True)
class ExperimentConfig:
    """Settings shared by the command-line experiments.

    ``seed`` is recorded verbatim in every report.  ``n_orbit`` bounds
    orbit/separation horizons, ``n_series`` truncates potential series,
    ``n_cocycle`` is the cocycle step count, ``grid`` the heatmap
    resolution, ``max_period`` the saddle-cloud period cutoff.  The chart
    window (``chart``, ``center``, ``halfwidth``) frames grid computations.
    """

    seed: int = 2026
    n_orbit: int = 50
    n_series: int = 25
    n_cocycle: int = 240
    grid: int = 64
    max_period: int = 3
    tolerance_indeterminacy: float = 1e-6
    chart: int = 2
    center: tuple[float, float] = (0.0, 0.0)
    halfwidth: float = 1.5
    out_dir: str = "."

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if not isinstance(self.seed, int) or not (0 <= self.seed < 2**64):
            raise MapFileError("seed must be an unsigned 64-bit integer")
        for field_name in ("n_orbit", "n_cocycle", "max_period"):
            if getattr(self, field_name) < 1:
                raise MapFileError(f"{field_name} must be at least 1")
        if self.n_series < 0:
            raise MapFileError("n_series must be nonnegative")
        if self.grid < 8:
            raise MapFileError("grid resolution must be at least 8")
        if not self.tolerance_indeterminacy > 0:
            raise MapFileError("tolerance_indeterminacy must be positive")
        if self.chart not in (0, 1, 2):
            raise MapFileError("chart must be 0, 1, or 2")
        if not self.halfwidth > 0:
            raise MapFileError("halfwidth must be positive")
        if len(self.center) != 2:
            raise MapFileError("center must be a pair of reals")

    def to_json(self) -> str:
        data = asdict(self)
        data["center"] = list(data["center"])
        return json.dumps(data, indent=2, sort_keys=True) + "\n"

    def with_overrides(self, **kwargs) -> "ExperimentConfig":
        updates = {k: v for k, v in kwargs.items() if v is not None}
        return replace(self, **updates) if updates else self


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    """Parse an experiment configuration file, rejecting unknown keys."""
    data = _read_json(path)
    if not isinstance(data, dict):
        raise MapFileError("config file must contain a JSON object")
    known = set(ExperimentConfig.__dataclass_fields__)
    unknown = sorted(set(data) - known)
    if unknown:
        raise MapFileError(f"unknown config keys: {', '.join(unknown)}")
    try:
        return ExperimentConfig(**data)
    except TypeError as err:
        raise MapFileError(str(err)) from None
