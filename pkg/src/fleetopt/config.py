"""Configuration files: defaults shipped with the package, user overrides, JSON output."""

from __future__ import annotations

import copy
import json
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .cost import CostParams
from .ga import GaConfig
from .params import SimParams
from .solution import Bounds, ValidationError

FORMAT = "fleetopt-config"
VERSION = 1
SECTIONS = ("sim", "cost", "bounds", "ga")


@dataclass(frozen=True)
class Config:
    sim: SimParams
    cost: CostParams
    bounds: Bounds
    ga: GaConfig

    def to_dict(self) -> dict:
        return {
            "format": FORMAT,
            "version": VERSION,
            "sim": self.sim.to_dict(),
            "cost": self.cost.to_dict(),
            "bounds": self.bounds.to_dict(),
            "ga": self.ga.to_dict(),
        }


def default_dict() -> dict:
    text = resources.files("fleetopt").joinpath("default_params.json").read_text()
    return json.loads(text)


def merge(base: dict, override: dict) -> dict:
    """Recursive dict merge; values in ``override`` win, lists are replaced whole."""
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def from_dict(d: dict) -> Config:
    if d.get("format", FORMAT) != FORMAT:
        raise ValidationError("format", f"expected {FORMAT!r}")
    if d.get("version", VERSION) != VERSION:
        raise ValidationError("version", f"unsupported version {d.get('version')!r}")
    unknown = set(d) - set(SECTIONS) - {"format", "version"}
    if unknown:
        raise ValidationError(sorted(unknown)[0], "unknown config section")
    for key in SECTIONS:
        if not isinstance(d.get(key), dict):
            raise ValidationError(key, "missing or not an object")
    try:
        sim = SimParams.from_dict(d["sim"])
        cost = CostParams.from_dict(d["cost"])
        bounds = Bounds.from_dict(d["bounds"])
        ga = GaConfig.from_dict(d["ga"], bounds)
    except ValidationError:
        raise
    except (TypeError, ValueError, KeyError) as e:
        raise ValidationError("config", str(e)) from None
    return Config(sim, cost, bounds, ga)


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> Config:
    """Defaults, then the file at ``path``, then ``overrides`` (e.g. from CLI flags)."""
    d = default_dict()
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ValidationError("config", f"file not found: {p}")
        try:
            user = json.loads(p.read_text())
        except json.JSONDecodeError as e:
            raise ValidationError("config", f"{p}: invalid JSON ({e})") from None
        if not isinstance(user, dict):
            raise ValidationError("config", f"{p}: top level must be an object")
        d = merge(d, user)
    if overrides:
        d = merge(d, overrides)
    return from_dict(d)


_SCALAR_LIST = re.compile(r"\[\s*([^\[\]{}\"]*?)\s*\]", re.S)


def dumps(obj) -> str:
    """Indented JSON with innermost number lists kept on a single line."""
    text = json.dumps(obj, indent=1)
    return _SCALAR_LIST.sub(lambda m: "[" + ", ".join(s.strip() for s in m.group(1).split(",")) + "]"
                            if m.group(1) else "[]", text) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj))
