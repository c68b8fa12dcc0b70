"""TOML run documents: strict schema, defaults and conversion to SimConfig.

All quantities are nondimensional.  Sections and keys::

    [geometry]        backend ("interval" | "disk"), size, refine
    [model]           alpha, beta, omega, nu
    [kernel_omega]    family, params (table)
    [kernel_gamma]    family, params (table)
    [nonlinearity]    f, and either g or g_tilde (tables: family, coeffs | amplitude)
    [discretization]  n_modes, dt, t_end, scheme, s_max
    [initial]         u0, v0, phi0 (tables, see ``_FIELD_KINDS`` and ``_HISTORY_KINDS``)
    [output]          dir, stride, channels, modes, strong
    [limit]           epsilons
"""

from __future__ import annotations

import copy
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import memory as mem
from . import nonlinear as nl
from .errors import ConfigurationError, ValidationError
from .galerkin import SCHEMES, InitialData, SimConfig, Trajectory, validate
from .geometry import Geometry, build
from .wentzell import BulkBoundaryField, assemble, eigenbasis

OUT_ENV = "COGUR_OUT"

_REQUIRED = {
    "geometry": {"backend", "size", "refine"},
    "model": {"alpha", "beta", "omega", "nu"},
    "kernel_omega": {"family", "params"},
    "kernel_gamma": {"family", "params"},
    "discretization": {"n_modes", "dt", "t_end"},
}
_OPTIONAL = {
    "geometry": set(),
    "model": set(),
    "kernel_omega": set(),
    "kernel_gamma": set(),
    "nonlinearity": {"f", "g", "g_tilde"},
    "discretization": {"scheme", "s_max"},
    "initial": {"u0", "v0", "phi0"},
    "output": {"dir", "stride", "channels", "modes", "strong"},
    "limit": {"epsilons"},
}
_KERNEL_PARAMS = {
    "exponential": {"amplitude", "rate"},
    "biexponential": {"a1", "r1", "a2", "r2"},
    "powerlaw": {"amplitude", "exponent"},
    "modulated": {"amplitude", "rate", "depth", "freq"},
    "tabulated": {"s", "mu"},
}
_REACTION_KEYS = {"polynomial": {"family", "coeffs"}, "zero": {"family"}, "arctan": {"family", "amplitude"}}
_FIELD_KINDS = {
    "zero": set(),
    "constant": {"value"},
    "modes": {"coeffs"},
    "xpoly": {"coeffs"},
    "random": {"seed", "amplitude"},
}
_HISTORY_KINDS = {"zero": set(), "constant_past": set(), "saturating": {"rate"}}

DEFAULTS = {
    "nonlinearity": {"f": {"family": "zero"}, "g": {"family": "zero"}},
    "discretization": {"scheme": "imex-euler"},
    "initial": {"u0": {"kind": "zero"}, "phi0": {"kind": "zero"}},
    "output": {"dir": "cogur-out", "stride": 1, "channels": list(Trajectory.CSV_CHANNELS),
               "modes": False, "strong": False},
    "limit": {"epsilons": [0.5, 0.25, 0.125]},
}


@dataclass(frozen=True)
class OutputSpec:
    dir: Path
    stride: int
    channels: tuple
    modes: bool
    strong: bool


@dataclass(frozen=True, eq=False)
class LoadedConfig:
    """A parsed document together with the objects built from it."""

    document: dict
    sim: SimConfig
    output: OutputSpec
    reports: dict
    warnings: list = field(default_factory=list)

    @property
    def digest(self) -> str:
        return config_hash(self.document)


def config_hash(document: dict) -> str:
    blob = json.dumps(document, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _schema_errors(doc: dict, sections=None) -> list[str]:
    errs = []
    allowed = {**{k: set() for k in _OPTIONAL}, **{k: set() for k in _REQUIRED}}
    for name in doc:
        if name not in allowed:
            errs.append(f"unknown section [{name}]")
    wanted = sections if sections is not None else list(_REQUIRED)
    for sec in wanted:
        if sec in _REQUIRED and sec not in doc:
            errs.append(f"missing section [{sec}]")
    for sec, body in doc.items():
        if sec not in allowed:
            continue
        if not isinstance(body, dict):
            errs.append(f"[{sec}] must be a table")
            continue
        req = _REQUIRED.get(sec, set())
        ok = req | _OPTIONAL.get(sec, set())
        errs += [f"unknown key {sec}.{k}" for k in sorted(body) if k not in ok]
        errs += [f"missing key {sec}.{k}" for k in sorted(req) if k not in body]
    for side in ("kernel_omega", "kernel_gamma"):
        body = doc.get(side)
        if isinstance(body, dict) and "family" in body:
            fam = body["family"]
            if fam not in _KERNEL_PARAMS:
                errs.append(f"unknown kernel family {side}.family = {fam!r}")
            elif isinstance(body.get("params"), dict):
                p = body["params"]
                extra = ["dmu"] if fam == "tabulated" else []
                errs += [f"unknown key {side}.params.{k}" for k in sorted(p) if k not in _KERNEL_PARAMS[fam] | set(extra)]
                errs += [f"missing key {side}.params.{k}" for k in sorted(_KERNEL_PARAMS[fam]) if k not in p]
    nonlin = doc.get("nonlinearity", {})
    if isinstance(nonlin, dict):
        if "g" in nonlin and "g_tilde" in nonlin:
            errs.append("nonlinearity.g and nonlinearity.g_tilde are mutually exclusive")
        for k in ("f", "g", "g_tilde"):
            if k in nonlin:
                errs += _table_errors(f"nonlinearity.{k}", nonlin[k], "family", _REACTION_KEYS, default="polynomial")
    init = doc.get("initial", {})
    if isinstance(init, dict):
        for k in ("u0", "v0"):
            if k in init:
                errs += _table_errors(f"initial.{k}", init[k], "kind", _FIELD_KINDS)
        if "phi0" in init:
            errs += _table_errors("initial.phi0", init["phi0"], "kind", _HISTORY_KINDS)
    return errs


def _table_errors(where, table, tag, kinds, default=None) -> list[str]:
    if not isinstance(table, dict):
        return [f"{where} must be a table"]
    kind = table.get(tag, default)
    if kind not in kinds:
        return [f"unknown {where}.{tag} = {kind!r}"]
    allowed = kinds[kind] | {tag}
    return [f"unknown key {where}.{k}" for k in sorted(table) if k not in allowed]


def resolve(doc: dict) -> dict:
    """Document with defaults filled in (the form that is hashed)."""
    out = copy.deepcopy(doc)
    for sec, vals in DEFAULTS.items():
        body = out.setdefault(sec, {})
        for k, v in vals.items():
            if sec == "nonlinearity" and k == "g" and "g_tilde" in body:
                continue
            body.setdefault(k, copy.deepcopy(v))
    return out


def load_document(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"{path}: {exc}") from exc
    except OSError as exc:
        raise ConfigurationError(f"cannot read {path}: {exc}") from exc


def build_kernel(body: dict, side: str) -> mem.MemoryKernel:
    fam = body["family"]
    p = body["params"]
    if fam == "exponential":
        return mem.exponential(p["amplitude"], p["rate"], side)
    if fam == "biexponential":
        return mem.biexponential(p["a1"], p["r1"], p["a2"], p["r2"], side)
    if fam == "powerlaw":
        return mem.powerlaw(p["amplitude"], p["exponent"], side)
    if fam == "modulated":
        return mem.modulated(p["amplitude"], p["rate"], p["depth"], p["freq"], side)
    return mem.tabulated(p["s"], p["mu"], p.get("dmu"), side)


def build_nonlinearity(body: dict, nu: float, beta: float) -> nl.NonlinearitySpec:
    f = nl.scalar_function(body["f"])
    if "g_tilde" in body:
        return nl.NonlinearitySpec.from_g_tilde(f, nl.scalar_function(body["g_tilde"]), nu, beta)
    return nl.NonlinearitySpec(f, nl.scalar_function(body["g"]))


def _nodal_field(desc: dict, geom: Geometry, model: dict, n_modes: int) -> np.ndarray:
    kind = desc["kind"]
    n = geom.n_nodes
    if kind == "zero":
        return np.zeros(n)
    if kind == "constant":
        return np.full(n, float(desc["value"]))
    if kind == "xpoly":
        return np.polynomial.polynomial.polyval(geom.nodes[:, 0], np.asarray(desc["coeffs"], dtype=float))
    if kind == "random":
        rng = np.random.default_rng(int(desc.get("seed", 0)))
        return float(desc.get("amplitude", 1.0)) * rng.standard_normal(n)
    coeffs = np.asarray(desc["coeffs"], dtype=float)
    if coeffs.size > n_modes:
        raise ConfigurationError("initial.u0.coeffs is longer than discretization.n_modes")
    op = assemble(geom, model["alpha"], model["beta"], model["omega"], model["nu"])
    return eigenbasis(op, max(coeffs.size, 1)).nodal(coeffs)


def _history(desc: dict, x0: np.ndarray):
    kind = desc["kind"]
    if kind == "zero":
        return None
    if kind == "constant_past":
        # u(-tau) = U0 for all tau > 0
        return lambda s: np.outer(s, x0)
    rate = float(desc.get("rate", 1.0))
    return lambda s: np.outer(-np.expm1(-rate * s) / rate, x0)


def build_sim(doc: dict, geometry: Geometry | None = None, **overrides) -> SimConfig:
    """SimConfig from a resolved document; ``overrides`` replace discretization
    entries (``dt``, ``n_modes``, ``scheme``, ``t_end``)."""
    g = doc["geometry"]
    geom = geometry or build(g["backend"], float(g["size"]), int(g["refine"]))
    m = {k: float(v) for k, v in doc["model"].items()}
    d = {**doc["discretization"], **overrides}
    ko = build_kernel(doc["kernel_omega"], mem.OMEGA_SIDE)
    kg = build_kernel(doc["kernel_gamma"], mem.GAMMA_SIDE)
    spec = build_nonlinearity(doc["nonlinearity"], m["nu"], m["beta"])
    n_modes = int(d["n_modes"])
    init = doc["initial"]
    x0 = _nodal_field(init["u0"], geom, m, n_modes)
    v0 = x0[geom.boundary_nodes] if "v0" not in init else _nodal_field(init["v0"], geom, m, n_modes)[geom.boundary_nodes]
    tag = "X2" if "v0" in init else "V1"
    u0 = BulkBoundaryField(x0, v0, tag)
    return SimConfig(
        geometry=geom, alpha=m["alpha"], beta=m["beta"], omega=m["omega"], nu=m["nu"],
        kernel_omega=ko, kernel_gamma=kg, nonlinearity=spec,
        n_modes=n_modes, dt=float(d["dt"]), t_end=float(d["t_end"]),
        initial=InitialData(u0, _history(init["phi0"], x0)),
        scheme=d.get("scheme", "imex-euler"),
        s_max=None if d.get("s_max") is None else float(d["s_max"]),
        stride=int(doc["output"]["stride"]),
    )


def _check_ranges(doc: dict) -> list[str]:
    errs = []
    m = doc["model"]
    for k in ("omega", "nu"):
        v = m.get(k)
        if not isinstance(v, (int, float)) or not 0 < v < 1:
            errs.append(f"{k} must lie in (0,1)")
    for k in ("alpha", "beta"):
        v = m.get(k)
        if not isinstance(v, (int, float)) or v <= 0:
            errs.append(f"{k} must be positive")
    scheme = doc["discretization"].get("scheme")
    if scheme not in SCHEMES:
        errs.append(f"discretization.scheme must be one of {', '.join(SCHEMES)}")
    return errs


def output_spec(doc: dict) -> OutputSpec:
    o = doc["output"]
    out_dir = os.environ.get(OUT_ENV) or o["dir"]
    bad = [c for c in o["channels"] if c not in Trajectory.CSV_CHANNELS + ("energy",)]
    if bad:
        raise ConfigurationError(f"unknown output channels: {', '.join(bad)}")
    return OutputSpec(Path(out_dir), int(o["stride"]), tuple(o["channels"]), bool(o["modes"]), bool(o["strong"]))


def parse_config(path, force: bool = False) -> LoadedConfig:
    """Read, check and build a run document.

    Schema problems are reported together.  Validator failures raise
    :class:`ValidationError` unless ``force``; failing fading certificates
    only produce warnings.
    """
    return parse_document(load_document(path), force)


def parse_document(raw: dict, force: bool = False) -> LoadedConfig:
    errs = _schema_errors(raw)
    if errs:
        raise ConfigurationError("invalid configuration: " + "; ".join(errs))
    doc = resolve(raw)
    errs = _check_ranges(doc)
    if errs:
        raise ConfigurationError("; ".join(errs))
    sim = build_sim(doc)
    checked = validate(sim)
    warnings = []
    for side in ("kernel_omega", "kernel_gamma"):
        if not checked["reports"][side]["fading"]:
            warnings.append(f"{side}: fading condition fails (no exponential decay rate certified)")
    if checked["failures"] and not force:
        raise ValidationError(checked["failures"])
    return LoadedConfig(doc, sim, output_spec(doc), checked, warnings)


def parse_sections(path, sections) -> dict:
    """Strictly check a partial document holding only ``sections``."""
    raw = load_document(path)
    errs = _schema_errors(raw, sections=sections)
    errs += [f"missing section [{s}]" for s in sections if s not in raw and s not in _REQUIRED]
    if errs:
        raise ConfigurationError("invalid configuration: " + "; ".join(errs))
    return resolve(raw)
