"""Run configuration (TOML, schema ``nftk-config v1``).

Every schema violation raises :class:`~nftk.errors.ConfigError` carrying
the dotted path of the offending entry.  Relative file paths are resolved
against the directory of the configuration file.
"""

from __future__ import annotations

import math
import os
import sys
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError, NFTKError
from .integrable_core import MAX_DEGREE, TOL_RES, IntegrableHamiltonian
from .torus_fourier import FD_ORDER, TWO_PI, ActionBox, SpectralField, forward_transform

SCHEMA = "nftk-config v1"
MIN_GRID = FD_ORDER + 1


@dataclass
class TrigTerm:
    """p_cos(xi) cos(2 pi k.x) + p_sin(xi) sin(2 pi k.x)."""

    k: tuple
    cos: dict
    sin: dict


@dataclass
class RunConfig:
    path: str
    dimension: int
    box: ActionBox
    fourier_cutoff: int
    k_max: int
    epsilon_list: list
    F0_terms: dict
    H1_terms: Optional[list] = None
    H1_field_file: Optional[str] = None
    H1_sample_file: Optional[str] = None
    tol_res: float = TOL_RES
    delta_res: Optional[float] = None
    tol_div: Optional[float] = None
    output_dir: str = "."
    report_name: str = "report.json"
    csv_name: str = "table.csv"
    tori: list = field(default_factory=list)
    q_max: int = 8
    x_samples: int = 16
    decompose_hamiltonian: list = field(default_factory=list)
    decompose_lift_u: Optional[list] = None
    decompose_lift_potential: dict = field(default_factory=dict)
    decompose_field_dir: Optional[str] = None
    decompose_family: bool = False
    generator_scale: float = 1.0
    test_points: int = 200

    @property
    def has_H1(self):
        return any(v is not None for v in (self.H1_terms, self.H1_field_file, self.H1_sample_file))

    def build_F0(self):
        try:
            return IntegrableHamiltonian(self.F0_terms, self.box)
        except (ValueError, NFTKError) as exc:
            raise ConfigError(str(exc), "F0.terms") from exc

    def build_H1(self):
        """The perturbation as a SpectralField on the configured grid."""
        if self.H1_terms is not None:
            return trig_field(self.H1_terms, self.box, self.fourier_cutoff)
        if self.H1_field_file is not None:
            try:
                f = SpectralField.load(self.H1_field_file)
            except (OSError, ValueError) as exc:
                raise ConfigError(f"cannot load field: {exc}", "H1.field_file") from exc
            if f.box != self.box:
                raise ConfigError("field box differs from [box]", "H1.field_file")
            return f.truncate(self.fourier_cutoff) if f.cutoff > self.fourier_cutoff else f
        if self.H1_sample_file is not None:
            try:
                samples = np.load(self.H1_sample_file)
                return forward_transform(samples, self.box, self.fourier_cutoff)
            except (OSError, ValueError) as exc:
                raise ConfigError(f"cannot use samples: {exc}", "H1.sample_file") from exc
        raise ConfigError("no perturbation given", "H1")


def _poly(table, xi):
    out = np.zeros(np.broadcast_shapes(*(a.shape for a in xi)))
    for p, c in table.items():
        term = np.full(out.shape, c)
        for a, e in zip(xi, p):
            term = term * a ** e
        out = out + term
    return out


def trig_field(terms, box, cutoff):
    """Band-limited field from a list of :class:`TrigTerm`."""
    for i, t in enumerate(terms):
        if max(abs(v) for v in t.k) > cutoff:
            raise ConfigError(f"mode {t.k} exceeds fourier_cutoff {cutoff}", f"H1.terms[{i}].k")

    def func(xi, x):
        total = 0.0
        for t in terms:
            phase = TWO_PI * sum(kj * xj for kj, xj in zip(t.k, x))
            if t.cos:
                total = total + _poly(t.cos, xi) * np.cos(phase)
            if t.sin:
                total = total + _poly(t.sin, xi) * np.sin(phase)
        return total + 0.0 * xi[0] * x[0]

    return SpectralField.from_function(box, cutoff, func)


# --------------------------------------------------------------------------
# schema helpers


def _get(table, key, path, kind, required=True, default=None):
    full = f"{path}.{key}" if path else key
    if key not in table:
        if required:
            raise ConfigError("missing required entry", full)
        return default
    v = table[key]
    if kind is float:
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise ConfigError(f"expected a finite number, got {v!r}", full)
        return float(v)
    if kind is int:
        if isinstance(v, bool) or not isinstance(v, int):
            raise ConfigError(f"expected an integer, got {v!r}", full)
        return v
    if not isinstance(v, kind):
        raise ConfigError(f"expected {kind.__name__}, got {type(v).__name__}", full)
    return v


def _float_list(v, n, path):
    if not isinstance(v, list) or (n is not None and len(v) != n):
        want = f"a list of {n} numbers" if n is not None else "a list of numbers"
        raise ConfigError(f"expected {want}", path)
    out = []
    for i, a in enumerate(v):
        if isinstance(a, bool) or not isinstance(a, (int, float)) or not math.isfinite(a):
            raise ConfigError(f"expected a finite number, got {a!r}", f"{path}[{i}]")
        out.append(float(a))
    return out


def _int_list(v, n, path):
    if not isinstance(v, list) or len(v) != n:
        raise ConfigError(f"expected a list of {n} integers", path)
    for i, a in enumerate(v):
        if isinstance(a, bool) or not isinstance(a, int):
            raise ConfigError(f"expected an integer, got {a!r}", f"{path}[{i}]")
    return [int(a) for a in v]


def _check_keys(table, allowed, path):
    for key in table:
        if key not in allowed:
            raise ConfigError("unknown entry", f"{path}.{key}" if path else key)


def _poly_terms(v, d, path):
    if not isinstance(v, list):
        raise ConfigError("expected a list of {power, coeff} tables", path)
    out = {}
    for i, t in enumerate(v):
        p = f"{path}[{i}]"
        if not isinstance(t, dict):
            raise ConfigError("expected a {power, coeff} table", p)
        _check_keys(t, {"power", "coeff"}, p)
        power = tuple(_int_list(_get(t, "power", p, list), d, f"{p}.power"))
        if any(e < 0 for e in power):
            raise ConfigError("powers must be non-negative", f"{p}.power")
        if sum(power) > MAX_DEGREE:
            raise ConfigError(f"total degree exceeds {MAX_DEGREE}", f"{p}.power")
        out[power] = out.get(power, 0.0) + _get(t, "coeff", p, float)
    return out


def _resolve(base, name):
    return name if os.path.isabs(name) else os.path.normpath(os.path.join(base, name))


def parse_config(data, path="<config>"):
    """Validate a decoded TOML document and build a :class:`RunConfig`."""
    allowed = {"schema", "dimension", "box", "fourier_cutoff", "k_max", "epsilon_list", "F0", "H1",
               "tolerances", "output", "average", "decompose", "verify"}
    _check_keys(data, allowed, "")
    schema = _get(data, "schema", "", str)
    if schema != SCHEMA:
        raise ConfigError(f"expected {SCHEMA!r}, got {schema!r}", "schema")
    base = os.path.dirname(os.path.abspath(path)) if path != "<config>" else os.getcwd()
    d = _get(data, "dimension", "", int)
    if d < 1:
        raise ConfigError("must be at least 1", "dimension")

    box_t = _get(data, "box", "", dict)
    _check_keys(box_t, {"lo", "hi", "grid_points"}, "box")
    lo = _float_list(_get(box_t, "lo", "box", list), d, "box.lo")
    hi = _float_list(_get(box_t, "hi", "box", list), d, "box.hi")
    gp = _int_list(_get(box_t, "grid_points", "box", list), d, "box.grid_points")
    if any(a >= b for a, b in zip(lo, hi)):
        raise ConfigError("each lo must be below hi", "box")
    if any(n < MIN_GRID for n in gp):
        raise ConfigError(f"need at least {MIN_GRID} nodes per axis", "box.grid_points")
    box = ActionBox(lo, hi, gp)

    cutoff = _get(data, "fourier_cutoff", "", int)
    k_max = _get(data, "k_max", "", int)
    if k_max < 1:
        raise ConfigError("must be at least 1", "k_max")
    if cutoff < k_max:
        raise ConfigError(f"must be at least k_max = {k_max}", "fourier_cutoff")

    eps = _float_list(_get(data, "epsilon_list", "", list, required=False, default=[]),
                      None, "epsilon_list")
    if any(e <= 0 for e in eps):
        raise ConfigError("entries must be strictly positive", "epsilon_list")
    if any(a <= b for a, b in zip(eps, eps[1:])):
        raise ConfigError("entries must be sorted strictly descending", "epsilon_list")

    f0_t = _get(data, "F0", "", dict)
    _check_keys(f0_t, {"terms"}, "F0")
    f0_terms = _poly_terms(_get(f0_t, "terms", "F0", list), d, "F0.terms")

    cfg = RunConfig(path=path, dimension=d, box=box, fourier_cutoff=cutoff, k_max=k_max,
                    epsilon_list=eps, F0_terms=f0_terms)

    if "H1" in data:
        h = _get(data, "H1", "", dict)
        _check_keys(h, {"terms", "field_file", "sample_file"}, "H1")
        given = [k for k in ("terms", "field_file", "sample_file") if k in h]
        if len(given) != 1:
            raise ConfigError("give exactly one of terms, field_file, sample_file", "H1")
        if "terms" in h:
            cfg.H1_terms = _trig_terms(_get(h, "terms", "H1", list), d, "H1.terms")
        elif "field_file" in h:
            cfg.H1_field_file = _resolve(base, _get(h, "field_file", "H1", str))
        else:
            cfg.H1_sample_file = _resolve(base, _get(h, "sample_file", "H1", str))

    tol = _get(data, "tolerances", "", dict, required=False, default={})
    _check_keys(tol, {"tol_res", "delta_res", "tol_div"}, "tolerances")
    cfg.tol_res = _get(tol, "tol_res", "tolerances", float, required=False, default=TOL_RES)
    cfg.delta_res = _get(tol, "delta_res", "tolerances", float, required=False)
    cfg.tol_div = _get(tol, "tol_div", "tolerances", float, required=False)
    for key in ("tol_res", "delta_res", "tol_div"):
        v = getattr(cfg, key)
        if v is not None and v <= 0:
            raise ConfigError("must be positive", f"tolerances.{key}")

    out = _get(data, "output", "", dict, required=False, default={})
    _check_keys(out, {"dir", "report", "csv"}, "output")
    cfg.output_dir = _resolve(base, _get(out, "dir", "output", str, required=False, default="."))
    cfg.report_name = _get(out, "report", "output", str, required=False, default="report.json")
    cfg.csv_name = _get(out, "csv", "output", str, required=False, default="table.csv")

    av = _get(data, "average", "", dict, required=False, default={})
    _check_keys(av, {"tori", "q_max", "x_samples"}, "average")
    tori = _get(av, "tori", "average", list, required=False, default=[])
    cfg.tori = [_float_list(t, d, f"average.tori[{i}]") for i, t in enumerate(tori)]
    cfg.q_max = _get(av, "q_max", "average", int, required=False, default=8)
    cfg.x_samples = _get(av, "x_samples", "average", int, required=False, default=16)
    if cfg.q_max < 1:
        raise ConfigError("must be at least 1", "average.q_max")
    if cfg.x_samples < 1:
        raise ConfigError("must be at least 1", "average.x_samples")

    de = _get(data, "decompose", "", dict, required=False, default={})
    _check_keys(de, {"hamiltonian", "lift_u", "lift_potential", "field_dir", "family"}, "decompose")
    if "hamiltonian" in de:
        cfg.decompose_hamiltonian = _trig_terms(_get(de, "hamiltonian", "decompose", list), d,
                                                "decompose.hamiltonian")
    if "lift_u" in de:
        cfg.decompose_lift_u = _float_list(de["lift_u"], d, "decompose.lift_u")
    if "lift_potential" in de:
        cfg.decompose_lift_potential = _poly_terms(_get(de, "lift_potential", "decompose", list), d,
                                                   "decompose.lift_potential")
    if "field_dir" in de:
        cfg.decompose_field_dir = _resolve(base, _get(de, "field_dir", "decompose", str))
    cfg.decompose_family = _get(de, "family", "decompose", bool, required=False, default=False)

    ve = _get(data, "verify", "", dict, required=False, default={})
    _check_keys(ve, {"generator_scale", "test_points"}, "verify")
    cfg.generator_scale = _get(ve, "generator_scale", "verify", float, required=False, default=1.0)
    cfg.test_points = _get(ve, "test_points", "verify", int, required=False, default=200)
    if cfg.test_points < 3:
        raise ConfigError("must be at least 3", "verify.test_points")
    return cfg


def _trig_terms(v, d, path):
    out = []
    for i, t in enumerate(v):
        p = f"{path}[{i}]"
        if not isinstance(t, dict):
            raise ConfigError("expected a {k, cos, sin} table", p)
        _check_keys(t, {"k", "cos", "sin"}, p)
        k = tuple(_int_list(_get(t, "k", p, list), d, f"{p}.k"))
        cos = _poly_terms(t.get("cos", []), d, f"{p}.cos")
        sin = _poly_terms(t.get("sin", []), d, f"{p}.sin")
        if not cos and not sin:
            raise ConfigError("term needs a cos or sin polynomial", p)
        out.append(TrigTerm(k, cos, sin))
    return out


def load_config(path):
    """Read and validate a configuration file."""
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read configuration: {exc.strerror}", str(path)) from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}", str(path)) from exc
    return parse_config(data, str(path))
