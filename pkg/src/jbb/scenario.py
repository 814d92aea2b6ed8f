"""Scenario files: JSON in, validated typed values out.

Power-like fields are given either linear (``rho_u``) or in dB
(``rho_u_db``), never both. ``"-inf"`` is accepted for dB values and maps
to zero power. Validation errors carry the dotted path of the field.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .model import (
    CellGeometry,
    ConfigError,
    OperatingPoint,
    PathLossProfile,
    Precoder,
    Scheme,
    SystemConfig,
    db_to_linear,
    drop_terminals,
)

BUNDLED = ("fig_a", "fig_b", "fig_c", "fig_e1", "fig_e2")


@dataclass(frozen=True)
class MCSettings:
    n_channel: int = 100_000
    n_scalar: int = 1_000_000
    seed: int = 1


@dataclass(frozen=True)
class SweepSettings:
    rho_u: tuple
    rho_o: tuple
    scheme: Scheme = Scheme.JBB


@dataclass(frozen=True)
class Scenario:
    name: str
    system: SystemConfig
    geometry: CellGeometry
    beta: tuple | None
    drop_seed: int | None
    o_terminal: dict
    beta_o: float
    target_net_b: float | None
    target_net_o: float | None
    precoder: Precoder
    operating_point: OperatingPoint | None
    mc: MCSettings
    ratio_db: tuple
    sweep: SweepSettings | None

    def profile(self) -> PathLossProfile:
        if self.beta is not None:
            return PathLossProfile(self.beta, self.beta_o)
        return drop_terminals(self.geometry, self.system.K, self.drop_seed, beta_o=self.beta_o)

    def ratio_grid(self) -> np.ndarray:
        return db_to_linear(np.asarray(self.ratio_db, dtype=float))

    def to_dict(self) -> dict:
        s = self.system
        out = {
            "name": self.name,
            "system": {"M": s.M, "K": s.K, "Mp": s.Mp, "tau_c": s.tau_c, "tau_pu": s.tau_pu,
                       "tau_po": s.tau_po, "rho_u": s.rho_u},
            "geometry": {"inner_radius": self.geometry.inner_radius, "outer_radius": self.geometry.outer_radius,
                         "pathloss_exponent": self.geometry.pathloss_exponent},
            "drop": {"beta": list(self.beta)} if self.beta is not None else {"K": s.K, "seed": self.drop_seed},
            "o_terminal": dict(self.o_terminal),
            "targets": {},
            "precoder": self.precoder.value,
            "mc": {"n_channel": self.mc.n_channel, "n_scalar": self.mc.n_scalar, "seed": self.mc.seed},
            "grid": {"ratio_db": list(self.ratio_db)},
        }
        if self.target_net_b is not None:
            out["targets"]["net_b_sum"] = self.target_net_b
        if self.target_net_o is not None:
            out["targets"]["net_o"] = self.target_net_o
        if self.operating_point is not None:
            out["operating_point"] = {"rho_b": self.operating_point.rho_b, "rho_o": self.operating_point.rho_o}
        if self.sweep is not None:
            out["sweep"] = {"rho_u": list(self.sweep.rho_u), "rho_o": list(self.sweep.rho_o),
                            "scheme": self.sweep.scheme.value}
        return out

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def sha256(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# parsing helpers


def _section(doc, key, path, required=True):
    val = doc.get(key)
    if val is None:
        if required:
            raise ConfigError(f"{path}{key}", "missing required section")
        return None
    if not isinstance(val, dict):
        raise ConfigError(f"{path}{key}", f"must be an object, got {type(val).__name__}")
    return val


def _number(value, path):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"must be a number, got {value!r}")
    if not math.isfinite(value):
        raise ConfigError(path, f"must be finite, got {value!r}")
    return float(value)


def _db_value(value, path):
    if value == "-inf" or value is None:
        return -math.inf
    return _number(value, path)


def _power(sec, key, path, required=True, default=None):
    """Linear value of ``key`` or ``key_db`` in ``sec``."""
    has_lin, has_db = key in sec, f"{key}_db" in sec
    if has_lin and has_db:
        raise ConfigError(f"{path}{key}", f"give either {key} or {key}_db, not both")
    if has_db:
        v = sec[f"{key}_db"]
        if isinstance(v, list):
            return tuple(_lin_from_db(x, f"{path}{key}_db[{i}]") for i, x in enumerate(v))
        return _lin_from_db(v, f"{path}{key}_db")
    if has_lin:
        v = sec[key]
        if isinstance(v, list):
            return tuple(_number(x, f"{path}{key}[{i}]") for i, x in enumerate(v))
        return _number(v, f"{path}{key}")
    if required:
        raise ConfigError(f"{path}{key}", f"missing ({key} or {key}_db)")
    return default


def _lin_from_db(v, path):
    db = _db_value(v, path)
    return 0.0 if db == -math.inf else float(db_to_linear(db))


def _integer(sec, key, path, default=None):
    if key not in sec:
        if default is None:
            raise ConfigError(f"{path}{key}", "missing required field")
        return default
    v = sec[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{path}{key}", f"must be an integer, got {v!r}")
    return v


def _wrap(path, fn, *args, **kwargs):
    # re-raise type-level validation errors under the scenario path
    try:
        return fn(*args, **kwargs)
    except ConfigError as exc:
        raise ConfigError(f"{path}{exc.field}", str(exc).split(": ", 1)[-1]) from None


def from_dict(doc: dict) -> Scenario:
    if not isinstance(doc, dict):
        raise ConfigError("<root>", "scenario must be a JSON object")
    sys_sec = _section(doc, "system", "")
    system = _wrap(
        "system.", SystemConfig,
        M=_integer(sys_sec, "M", "system."), K=_integer(sys_sec, "K", "system."),
        Mp=_integer(sys_sec, "Mp", "system."), tau_c=_integer(sys_sec, "tau_c", "system."),
        tau_pu=_integer(sys_sec, "tau_pu", "system."), tau_po=_integer(sys_sec, "tau_po", "system."),
        rho_u=_power(sys_sec, "rho_u", "system."),
    )
    geo_sec = _section(doc, "geometry", "", required=False) or {}
    geometry = _wrap(
        "geometry.", CellGeometry,
        inner_radius=_number(geo_sec.get("inner_radius", 0.1), "geometry.inner_radius"),
        outer_radius=_number(geo_sec.get("outer_radius", 1.0), "geometry.outer_radius"),
        pathloss_exponent=_number(geo_sec.get("pathloss_exponent", 4.0), "geometry.pathloss_exponent"),
    )

    drop = _section(doc, "drop", "")
    beta, drop_seed = None, None
    if "beta" in drop or "beta_db" in drop:
        beta = _power(drop, "beta", "drop.")
        beta = beta if isinstance(beta, tuple) else (beta,)
        if len(beta) != system.K:
            raise ConfigError("drop.beta", f"needs K={system.K} entries, got {len(beta)}")
    else:
        k = _integer(drop, "K", "drop.")
        if k != system.K:
            raise ConfigError("drop.K", f"must equal system.K={system.K}, got {k}")
        drop_seed = _integer(drop, "seed", "drop.")

    o_sec = _section(doc, "o_terminal", "")
    if "distance" in o_sec:
        d = _number(o_sec["distance"], "o_terminal.distance")
        if not geometry.inner_radius <= d <= geometry.outer_radius:
            raise ConfigError("o_terminal.distance", f"must lie inside the cell annulus, got {d}")
        margin = _number(o_sec.get("margin_db", 0.0), "o_terminal.margin_db")
        beta_o = float(geometry.gain(d)) * float(db_to_linear(-margin))
    else:
        beta_o = _power(o_sec, "beta_o", "o_terminal.")
    if not beta_o > 0:
        raise ConfigError("o_terminal.beta_o", f"must be > 0, got {beta_o}")
    o_terminal = {k: o_sec[k] for k in sorted(o_sec)}
    if beta is not None:
        _wrap("drop.", PathLossProfile, beta, beta_o)

    t_sec = _section(doc, "targets", "", required=False) or {}
    target_b = t_sec.get("net_b_sum")
    target_o = t_sec.get("net_o")
    for key, v in (("net_b_sum", target_b), ("net_o", target_o)):
        if v is not None and not _number(v, f"targets.{key}") > 0:
            raise ConfigError(f"targets.{key}", f"must be > 0, got {v}")

    try:
        precoder = Precoder(doc.get("precoder", "ZF"))
    except ValueError:
        raise ConfigError("precoder", f"must be MR or ZF, got {doc.get('precoder')!r}") from None

    op = None
    op_sec = _section(doc, "operating_point", "", required=False)
    if op_sec is not None:
        op = _wrap("operating_point.", OperatingPoint,
                   _power(op_sec, "rho_b", "operating_point."), _power(op_sec, "rho_o", "operating_point."))

    mc_sec = _section(doc, "mc", "", required=False) or {}
    mc = MCSettings(
        n_channel=_integer(mc_sec, "n_channel", "mc.", MCSettings.n_channel),
        n_scalar=_integer(mc_sec, "n_scalar", "mc.", MCSettings.n_scalar),
        seed=_integer(mc_sec, "seed", "mc.", MCSettings.seed),
    )
    if mc.n_channel < 1 or mc.n_scalar < 1 or mc.seed < 0:
        raise ConfigError("mc", "draw counts must be >= 1 and seed >= 0")

    grid_sec = _section(doc, "grid", "", required=False) or {}
    if "ratio_db" in grid_sec:
        if not isinstance(grid_sec["ratio_db"], list) or not grid_sec["ratio_db"]:
            raise ConfigError("grid.ratio_db", "must be a non-empty list")
        ratio_db = tuple(_number(x, f"grid.ratio_db[{i}]") for i, x in enumerate(grid_sec["ratio_db"]))
    else:
        lo = _number(grid_sec.get("ratio_db_min", -10.0), "grid.ratio_db_min")
        hi = _number(grid_sec.get("ratio_db_max", 20.0), "grid.ratio_db_max")
        n = _integer(grid_sec, "n", "grid.", 121)
        if n < 1 or hi < lo:
            raise ConfigError("grid", f"need n >= 1 and ratio_db_max >= ratio_db_min, got n={n}, [{lo}, {hi}]")
        ratio_db = tuple(float(x) for x in np.linspace(lo, hi, n))
    if list(ratio_db) != sorted(ratio_db):
        raise ConfigError("grid.ratio_db", "must be increasing")

    sweep = None
    sw_sec = _section(doc, "sweep", "", required=False)
    if sw_sec is not None:
        rho_u = _power(sw_sec, "rho_u", "sweep.")
        rho_o = _power(sw_sec, "rho_o", "sweep.")
        rho_u = rho_u if isinstance(rho_u, tuple) else (rho_u,)
        rho_o = rho_o if isinstance(rho_o, tuple) else (rho_o,)
        if not rho_u:
            raise ConfigError("sweep.rho_u", "must be non-empty")
        try:
            scheme = Scheme(sw_sec.get("scheme", "JBB"))
        except ValueError:
            raise ConfigError("sweep.scheme", f"unknown scheme {sw_sec.get('scheme')!r}") from None
        sweep = SweepSettings(rho_u=rho_u, rho_o=rho_o, scheme=scheme)

    return Scenario(
        name=str(doc.get("name", "scenario")),
        system=system,
        geometry=geometry,
        beta=beta,
        drop_seed=drop_seed,
        o_terminal=o_terminal,
        beta_o=float(beta_o),
        target_net_b=None if target_b is None else float(target_b),
        target_net_o=None if target_o is None else float(target_o),
        precoder=precoder,
        operating_point=op,
        mc=mc,
        ratio_db=ratio_db,
        sweep=sweep,
    )


def load(path) -> Scenario:
    """Load a scenario file, or a bundled scenario by name (``fig_a`` ...)."""
    p = Path(path)
    if not p.exists() and str(path) in BUNDLED:
        text = resources.files("jbb").joinpath("scenarios", f"{path}.json").read_text(encoding="utf-8")
    else:
        try:
            text = p.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError("<file>", f"cannot read {path}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"invalid JSON at line {exc.lineno}: {exc.msg}") from None
    return from_dict(doc)
