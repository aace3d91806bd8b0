"""Run configuration: a sectioned key-value file mirrored onto module configs.

Grammar (one setting per line)::

    # comment
    [section]
    key = value

Recognized sections and keys are listed in DEFAULTS; values are parsed by the
type of the default.  Empty values mean "derive from other settings" where
noted.  Parse and validation errors carry the file name and line number.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from . import dmdc, plant
from .mpc import MpcConfig

# section -> key -> (default, help)
DEFAULTS = {
    "plant": {
        "grid_size": 71,
        "spacing": 1.0,
        "alpha": 8.0,
        "dt": 1.0,
        "boundary_temp": 20.0,
        "window_offset": 11,
        "window_size": 50,
        "actuators_per_axis": 6,
        "u_max": plant.DEFAULT_U_MAX,
        "source_radius": 10.0,
    },
    "excitation": {
        "steps": 5000,
        "hold": 50,
        "low": 0.0,
        "high": "",  # empty -> plant u_max
    },
    "truncation": {
        "s_mode": "fixed",   # fixed | energy
        "s_value": 55.0,
        "r_mode": "fixed",
        "r_value": 40.0,
    },
    "mpc": {
        "horizon": 10,
        "u_min": 0.0,
        "u_max": "",  # empty -> plant u_max
        "x_min": 15.0,
        "x_max": 35.0,
        "tracking_weight": 1.0,
        "input_weight": 1e-3,
        "state_penalty": 1e3,
        "constraint_stride": 1,
    },
    "reference": {
        "kind": "gaussian",
        "amplitude": 6.0,
        "sigma": 18.0,
        "level": 28.0,
        "slice_level": 24.5,
        "center_row": "",  # empty -> window center
        "center_col": "",
    },
    "run": {
        "seed": 2025,
        "train_size": 3000,
        "control_steps": 30,
        "validation_start": "",  # empty -> train_size
        "validation_steps": 50,
        "validate_tol": 1e-2,
        "ablation_orders": "10,20,30,40",
        "ablation_sizes": "500,1000,2000,3000",
    },
}


class ConfigError(ValueError):
    pass


def _parse_scalar(raw: str, default, where: str):
    if isinstance(default, bool):
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"{where}: expected a boolean, got {raw!r}")
    if isinstance(default, int) and not isinstance(default, bool):
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{where}: expected an integer, got {raw!r}") from None
    if isinstance(default, float):
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"{where}: expected a number, got {raw!r}") from None
    return raw


@dataclass
class RunConfig:
    """Resolved settings for every pipeline stage."""

    values: dict = field(default_factory=dict)
    source: str = "<defaults>"

    def __post_init__(self):
        merged = {s: dict(kv) for s, kv in DEFAULTS.items()}
        for sec, kv in self.values.items():
            merged[sec].update(kv)
        self.values = merged

    def get(self, section: str, key: str):
        return self.values[section][key]

    def set(self, section: str, key: str, value) -> None:
        if section not in self.values or key not in self.values[section]:
            raise ConfigError(f"unknown setting [{section}] {key}")
        self.values[section][key] = value

    # -- derived module objects -------------------------------------------

    def plant_config(self) -> plant.PlantConfig:
        p = self.values["plant"]
        actuators = plant.default_actuator_lattice(
            p["window_offset"], p["window_size"], p["actuators_per_axis"]
        )
        return plant.PlantConfig(
            grid_size=p["grid_size"], spacing=p["spacing"], alpha=p["alpha"],
            dt=p["dt"], boundary_temp=p["boundary_temp"],
            window_offset=p["window_offset"], window_size=p["window_size"],
            actuators=actuators, u_max=p["u_max"], source_radius=p["source_radius"],
        )

    def excitation(self):
        e = self.values["excitation"]
        high = e["high"]
        high = None if high == "" else float(high)
        return e["steps"], e["hold"], e["low"], high

    def truncation_rules(self):
        t = self.values["truncation"]

        def rule(mode, value, where):
            if mode == "fixed":
                return dmdc.TruncationRule.fixed(int(value))
            if mode == "energy":
                return dmdc.TruncationRule.energy(float(value))
            raise ConfigError(f"{where}: mode must be 'fixed' or 'energy', got {mode!r}")

        return (
            rule(t["s_mode"], t["s_value"], "[truncation] s_mode"),
            rule(t["r_mode"], t["r_value"], "[truncation] r_mode"),
        )

    def mpc_config(self, plant_cfg: plant.PlantConfig) -> MpcConfig:
        m = self.values["mpc"]
        u_max = m["u_max"]
        u_max = plant_cfg.u_max if u_max == "" else float(u_max)
        return MpcConfig(
            horizon=m["horizon"], u_min=m["u_min"], u_max=u_max,
            x_min=m["x_min"], x_max=m["x_max"],
            tracking_weight=m["tracking_weight"], input_weight=m["input_weight"],
            state_penalty=m["state_penalty"], constraint_stride=m["constraint_stride"],
        )

    def reference_params(self, plant_cfg: plant.PlantConfig) -> dict:
        r = self.values["reference"]
        m = self.values["mpc"]
        center = None
        if r["center_row"] != "" or r["center_col"] != "":
            if r["center_row"] == "" or r["center_col"] == "":
                raise ConfigError("[reference]: set both center_row and center_col")
            center = (float(r["center_row"]), float(r["center_col"]))
        return dict(
            window=plant_cfg.window_size, base=plant_cfg.boundary_temp,
            amplitude=r["amplitude"], sigma=r["sigma"], center=center,
            level=r["level"], slice_level=r["slice_level"],
            x_min=m["x_min"], x_max=m["x_max"],
        )

    def run_values(self) -> dict:
        r = dict(self.values["run"])
        if r["validation_start"] == "":
            r["validation_start"] = r["train_size"]
        else:
            r["validation_start"] = int(r["validation_start"])
        r["ablation_orders"] = _int_list(r["ablation_orders"], "[run] ablation_orders")
        r["ablation_sizes"] = _int_list(r["ablation_sizes"], "[run] ablation_sizes")
        return r

    def to_text(self) -> str:
        """Canonical rendering of the resolved configuration (manifest body)."""
        lines = []
        for sec in DEFAULTS:
            lines.append(f"[{sec}]")
            for key in DEFAULTS[sec]:
                lines.append(f"{key} = {self.values[sec][key]}")
            lines.append("")
        return "\n".join(lines)


def _int_list(raw, where: str):
    if isinstance(raw, (list, tuple)):
        return [int(v) for v in raw]
    parts = [p.strip() for p in str(raw).split(",") if p.strip()]
    try:
        return [int(p) for p in parts]
    except ValueError:
        raise ConfigError(f"{where}: expected comma-separated integers, got {raw!r}") from None


def parse_config(path) -> RunConfig:
    """Parse and validate a config file; errors carry file:line positions."""
    path = Path(path)
    values = {}
    section = None
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"{path}:{lineno}"
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in DEFAULTS:
                raise ConfigError(f"{where}: unknown section [{section}]")
            values.setdefault(section, {})
            continue
        if "=" not in line:
            raise ConfigError(f"{where}: expected 'key = value'")
        if section is None:
            raise ConfigError(f"{where}: setting outside of any [section]")
        key, _, raw_value = line.partition("=")
        key = key.strip()
        raw_value = raw_value.strip()
        if key not in DEFAULTS[section]:
            raise ConfigError(f"{where}: unknown key {key!r} in [{section}]")
        default = DEFAULTS[section][key]
        if raw_value == "" or default == "":
            values[section][key] = raw_value
        else:
            values[section][key] = _parse_scalar(raw_value, default, where)
    cfg = RunConfig(values, source=str(path))
    _validate(cfg, path)
    return cfg


def _validate(cfg: RunConfig, path) -> None:
    # construct every derived object so module invariants fire now
    try:
        pc = cfg.plant_config()
        cfg.mpc_config(pc)
        cfg.truncation_rules()
        cfg.reference_params(pc)
        run = cfg.run_values()
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    steps, hold, low, high = cfg.excitation()
    if steps < 2:
        raise ConfigError(f"{path}: [excitation] steps must be >= 2")
    if hold < 1:
        raise ConfigError(f"{path}: [excitation] hold must be >= 1")
    if run["train_size"] < 2 or run["train_size"] > steps:
        raise ConfigError(f"{path}: [run] train_size must be in [2, steps]")
    if run["control_steps"] < 1 or run["validation_steps"] < 1:
        raise ConfigError(f"{path}: [run] step counts must be positive")
