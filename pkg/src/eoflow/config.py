"""Run configuration: flat key=value text with named presets.

The format is UTF-8 lines ``key = value`` with ``#`` comments; keys are
namespaced with dots. A ``preset`` line pulls in a complete named
configuration; any other keys override it, so configs stay diff-able.
Lists (per-species parameters, the inlet velocity) are space-separated
numbers; strings may be bare or double-quoted.
"""

from dataclasses import dataclass

import numpy as np

from .assembly import PhysParams
from .errors import ConfigError, ParameterError
from .mesh import GEOMETRY_KINDS, GeometrySpec
from .scheme import BcSet

_FLOAT = "float"
_INT = "int"
_STR = "str"
_FLOATS = "floats"

KEY_TYPES = {
    "preset": _STR,
    "geometry.kind": _STR,
    "geometry.width": _FLOAT,
    "geometry.length": _FLOAT,
    "geometry.roughness_height": _FLOAT,
    "geometry.roughness_width": _FLOAT,
    "geometry.roughness_spacing": _FLOAT,
    "geometry.edge_length": _FLOAT,
    "physics.viscosity": _FLOAT,
    "physics.permittivity": _FLOAT,
    "physics.mobility": _FLOATS,
    "physics.diffusivity": _FLOATS,
    "physics.valence": _FLOATS,
    "bcs.u_in": _FLOATS,
    "bcs.c_in": _FLOATS,
    "bcs.phi_in": _FLOAT,
    "bcs.phi_out": _FLOAT,
    "bcs.xi": _FLOAT,
    "time.tau": _FLOAT,
    "time.T": _FLOAT,
    "output.interval": _INT,
    "scheme.convection": _STR,
    "scheme.slip_potential": _STR,
    "solver.kind": _STR,
    "solver.tol": _FLOAT,
}

_DEFAULTS = {
    "geometry.kind": "unit_square",
    "geometry.width": 1.0,
    "geometry.length": 1.0,
    "geometry.roughness_height": 0.0,
    "geometry.roughness_width": 0.0,
    "geometry.roughness_spacing": 0.0,
    "geometry.edge_length": 0.125,
    "physics.viscosity": 1.0,
    "physics.permittivity": 1.0,
    "physics.mobility": [1.0],
    "physics.diffusivity": [1.0],
    "physics.valence": [1.0],
    "bcs.u_in": [0.0, 0.0],
    "bcs.c_in": [1.0],
    "bcs.phi_in": 0.0,
    "bcs.phi_out": 0.0,
    "bcs.xi": 1e-6,
    "time.tau": 1e-7,
    "time.T": 1e-6,
    "output.interval": 10,
    "scheme.convection": "skew",
    "scheme.slip_potential": "current",
    "solver.kind": "direct",
    "solver.tol": 1e-10,
}

# microfluidic model parameters: three ionic species with the tabulated
# mobilities/diffusivities/valences, slip coefficient 1e-6
_TABLE = {
    "physics.mobility": [5e-8, 3e-7, 3e-8],
    "physics.diffusivity": [2e-10, 3e-10, 2e-10],
    "physics.valence": [1.0, -1.0, -2.0],
    "physics.permittivity": 1.0,
    "bcs.c_in": [1.0, 1.0, 1.0],
    "bcs.xi": 1e-6,
    "bcs.phi_in": 0.0,
    "bcs.phi_out": 0.0,
}


def _tjunction(viscosity, T):
    d = dict(_TABLE)
    d.update(
        {
            "geometry.kind": "tjunction",
            "geometry.width": 1e-6,
            "geometry.length": 4e-6,
            "geometry.edge_length": 1e-7,
            "physics.viscosity": viscosity,
            "bcs.u_in": [-1.0, 0.0],
            "time.tau": 1e-7,
            "time.T": T,
            "output.interval": 10,
        }
    )
    return d


def _rough(height_fraction):
    width = 1e-6
    length = 2 * width
    d = dict(_TABLE)
    d.update(
        {
            "geometry.kind": "rough_channel",
            "geometry.width": width,
            "geometry.length": length,
            "geometry.roughness_height": height_fraction * width,
            "geometry.roughness_width": width / 4,
            "geometry.roughness_spacing": length / 3,
            "geometry.edge_length": 5e-8,
            "physics.viscosity": 1.0,
            "bcs.u_in": [1e-2, 0.0],
            "time.tau": 1e-7,
            "time.T": 2e-5,
            "output.interval": 20,
        }
    )
    return d


def _mms_default():
    return {
        "geometry.kind": "unit_square",
        "geometry.edge_length": 0.125,
        "physics.viscosity": 1.0,
        "physics.permittivity": 1.0,
        "physics.mobility": [0.4, 0.3],
        "physics.diffusivity": [0.7, 1.3],
        "physics.valence": [1.0, -1.0],
        "bcs.u_in": [0.0, 0.0],
        "bcs.c_in": [1.0, 1.0],
        "time.tau": 0.01,
        "time.T": 0.1,
    }


PRESETS = {
    "tjunction-nu1": lambda: _tjunction(1.0, 6e-6),
    "tjunction-nu01": lambda: _tjunction(0.1, 1.36e-5),
    "rough-01h": lambda: _rough(0.1),
    "rough-02h": lambda: _rough(0.2),
    "rough-03h": lambda: _rough(0.3),
    "rough-04h": lambda: _rough(0.4),
    "mms-default": _mms_default,
}


@dataclass
class SimConfig:
    """A complete, validated run description."""

    geometry: GeometrySpec
    physics: PhysParams
    bcs: BcSet
    tau: float
    T: float
    output_interval: int
    convection: str
    slip_potential: str
    solver: str
    solver_tol: float
    preset: str = ""

    def validate(self):
        self.geometry.validate()
        if self.tau <= 0:
            raise ParameterError("time.tau must be positive")
        if self.T < self.tau:
            raise ParameterError("time.T must be at least one step")
        if self.output_interval < 1:
            raise ParameterError("output.interval must be >= 1")
        if self.convection not in ("skew", "plain"):
            raise ParameterError("scheme.convection must be skew or plain")
        if self.slip_potential not in ("current", "lagged"):
            raise ParameterError("scheme.slip_potential must be current or lagged")
        if self.solver not in ("direct", "iterative"):
            raise ParameterError("solver.kind must be direct or iterative")
        if len(self.bcs.c_in) != self.physics.species_count:
            raise ParameterError("bcs.c_in length must match the species count")

    def to_flat(self):
        g, p, b = self.geometry, self.physics, self.bcs
        return {
            "preset": self.preset,
            "geometry.kind": g.kind,
            "geometry.width": g.width,
            "geometry.length": g.length,
            "geometry.roughness_height": g.roughness_height,
            "geometry.roughness_width": g.roughness_width,
            "geometry.roughness_spacing": g.roughness_spacing,
            "geometry.edge_length": g.edge_length,
            "physics.viscosity": p.viscosity,
            "physics.permittivity": p.permittivity,
            "physics.mobility": list(p.mobility),
            "physics.diffusivity": list(p.diffusivity),
            "physics.valence": list(p.valence),
            "bcs.u_in": list(b.u_in),
            "bcs.c_in": list(b.c_in),
            "bcs.phi_in": b.phi_in,
            "bcs.phi_out": b.phi_out,
            "bcs.xi": b.xi,
            "time.tau": self.tau,
            "time.T": self.T,
            "output.interval": self.output_interval,
            "scheme.convection": self.convection,
            "scheme.slip_potential": self.slip_potential,
            "solver.kind": self.solver,
            "solver.tol": self.solver_tol,
        }


def _from_flat(flat, preset=""):
    geometry = GeometrySpec(
        kind=flat["geometry.kind"],
        width=flat["geometry.width"],
        length=flat["geometry.length"],
        roughness_height=flat["geometry.roughness_height"],
        roughness_width=flat["geometry.roughness_width"],
        roughness_spacing=flat["geometry.roughness_spacing"],
        edge_length=flat["geometry.edge_length"],
    )
    physics = PhysParams(
        viscosity=flat["physics.viscosity"],
        permittivity=flat["physics.permittivity"],
        mobility=np.array(flat["physics.mobility"]),
        diffusivity=np.array(flat["physics.diffusivity"]),
        valence=np.array(flat["physics.valence"]),
    )
    bcs = BcSet(
        u_in=np.array(flat["bcs.u_in"]),
        c_in=np.array(flat["bcs.c_in"]),
        phi_in=flat["bcs.phi_in"],
        phi_out=flat["bcs.phi_out"],
        xi=flat["bcs.xi"],
    )
    cfg = SimConfig(
        geometry=geometry,
        physics=physics,
        bcs=bcs,
        tau=flat["time.tau"],
        T=flat["time.T"],
        output_interval=flat["output.interval"],
        convection=flat["scheme.convection"],
        slip_potential=flat["scheme.slip_potential"],
        solver=flat["solver.kind"],
        solver_tol=flat["solver.tol"],
        preset=preset,
    )
    cfg.validate()
    return cfg


def preset_config(name):
    """The complete configuration of a named preset."""
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: {sorted(PRESETS)}")
    flat = dict(_DEFAULTS)
    flat.update(PRESETS[name]())
    return _from_flat(flat, preset=name)


def _parse_value(raw, kind, lineno):
    raw = raw.strip()
    if kind == _STR:
        if raw.startswith('"') and raw.endswith('"') and len(raw) >= 2:
            return raw[1:-1]
        if any(ch in raw for ch in ' \t"'):
            raise ConfigError(f"malformed string value {raw!r}", lineno)
        return raw
    tokens = raw.split()
    try:
        values = [float(tok) for tok in tokens]
    except ValueError:
        raise ConfigError(f"expected numeric value, got {raw!r}", lineno) from None
    if kind == _FLOATS:
        if not values:
            raise ConfigError("expected at least one number", lineno)
        return values
    if len(values) != 1:
        raise ConfigError(f"expected a single number, got {raw!r}", lineno)
    if kind == _INT:
        if values[0] != int(values[0]):
            raise ConfigError(f"expected an integer, got {raw!r}", lineno)
        return int(values[0])
    return values[0]


def parse_config(text):
    """Parse configuration text; the first error is reported with its line."""
    entries = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"expected 'key = value', got {stripped!r}", lineno)
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key not in KEY_TYPES:
            raise ConfigError(f"unknown key {key!r}", lineno)
        entries.append((lineno, key, _parse_value(raw, KEY_TYPES[key], lineno)))

    flat = dict(_DEFAULTS)
    preset = ""
    for lineno, key, value in entries:
        if key == "preset":
            if value not in PRESETS:
                raise ConfigError(f"unknown preset {value!r}", lineno)
            preset = value
            flat.update(PRESETS[value]())
    for lineno, key, value in entries:
        if key != "preset":
            flat[key] = value

    try:
        return _from_flat(flat, preset=preset)
    except (ParameterError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def serialize_config(cfg):
    """Emit configuration text that parses back to an equal config."""
    flat = cfg.to_flat()
    lines = []
    for key in KEY_TYPES:
        if key == "preset":
            continue
        value = flat[key]
        if isinstance(value, str):
            rendered = f'"{value}"'
        elif isinstance(value, list):
            rendered = " ".join(f"{v:.17g}" for v in value)
        elif isinstance(value, int):
            rendered = str(value)
        else:
            rendered = f"{value:.17g}"
        lines.append(f"{key} = {rendered}")
    return "\n".join(lines) + "\n"
