"""Run configuration: flat `key = value` text files with explicit defaults.

Lines are `key = value`, blank lines and `#` comments allowed. Lists are
comma separated. Unknown keys are rejected with their line number; every
numeric constraint is validated before any solve starts. The full schema
with defaults is SCHEMA below and is what `torushj report --schema` prints.
"""

from dataclasses import dataclass, field, fields as dc_fields

from .catalog import OSC_NAMES, SYSTEM_NAMES, is_oscillating, scenario_defaults
from .errors import ConfigError


def _flt(x):
    return float(x)


def _pos(name):
    def check(v):
        if v is not None and v <= 0:
            raise ConfigError(f"{name} must be positive, got {v}")

    return check


def _pos_list(name):
    def check(vs):
        if any(v <= 0 for v in vs):
            raise ConfigError(f"{name} entries must be positive, got {vs}")

    return check


def _decreasing(name):
    def check(vs):
        if len(vs) < 3:
            raise ConfigError(f"{name} needs at least 3 values, got {len(vs)}")
        if any(v <= 0 for v in vs):
            raise ConfigError(f"{name} entries must be positive, got {vs}")
        if any(b >= a for a, b in zip(vs, vs[1:])):
            raise ConfigError(f"{name} must be strictly decreasing, got {vs}")

    return check


def _strictly_decreasing_eps(name):
    def check(vs):
        if not vs:
            raise ConfigError(f"{name} must be nonempty")
        if any(v <= 0 for v in vs):
            raise ConfigError(f"{name} entries must be positive, got {vs}")
        if any(b >= a for a, b in zip(vs, vs[1:])):
            raise ConfigError(f"{name} must be strictly decreasing, got {vs}")

    return check


def _parse_bool(s):
    s = s.strip().lower()
    if s in ("true", "1", "yes", "on"):
        return True
    if s in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_list(cast):
    def parse(s):
        return [cast(tok.strip()) for tok in s.split(",") if tok.strip()]

    return parse


def _parse_optional_float(s):
    if s.strip().lower() in ("auto", "none"):
        return None
    return float(s)


# name -> (parser, default, validator or None, help)
SCHEMA = {
    "scenario": (str.strip, "eikonal1d", None, "catalog scenario name"),
    "grid_n": (_parse_list(int), [256], _pos_list("grid_n"),
               "nodes per axis (one value per axis, or one for all)"),
    "delta_schedule": (_parse_list(float), [1e-1, 3e-2, 1e-2, 3e-3, 1e-3],
                       _decreasing("delta_schedule"),
                       "decreasing discount schedule, >= 3 values"),
    "dt": (_parse_optional_float, None, _pos("dt"),
           "time step; auto = half cell over max sampled speed"),
    "cfl_safety": (float, 0.5, _pos("cfl_safety"), "fraction of the one-cell bound"),
    "tol": (float, 1e-2, _pos("tol"), "fixed point stopping multiplier"),
    "max_iter": (int, 400_000, _pos("max_iter"), "sweep budget per solve"),
    "delta": (float, 1e-2, _pos("delta"), "single discount rate for `discount`"),
    "t1": (float, 10.0, _pos("t1"), "long-time estimator start"),
    "t2": (float, 20.0, _pos("t2"), "long-time estimator end"),
    "t_end": (float, 1.0, _pos("t_end"), "evolution horizon"),
    "record_every": (int, 1, _pos("record_every"), "snapshot stride in steps"),
    "w0_csv": (str.strip, "", None, "initial-datum CSV for `evolve` (empty = 0)"),
    "wk_tol": (float, 5e-3, _pos("wk_tol"), "weak KAM update tolerance per unit time"),
    "wk_t_max": (float, 80.0, _pos("wk_t_max"), "weak KAM iteration horizon"),
    "wk_ts": (_parse_list(float), [0.25, 0.5, 1.0], _pos_list("wk_ts"),
              "fixed-point residual test times"),
    "reach_k": (float, 2.0, _pos("reach_k"), "control radius for reachability"),
    "reach_dt": (_parse_optional_float, None, _pos("reach_dt"),
                 "edge step; auto = h/(2 reach_k)"),
    "reach_horizon": (float, 10.0, _pos("reach_horizon"), "reachability cutoff"),
    "reach_per_axis": (int, 8, _pos("reach_per_axis"), "sampled nodes per axis"),
    "sbg_order": (int, 4, _pos("sbg_order"), "max bracket depth"),
    "sbg_points": (int, 8, _pos("sbg_points"), "rank sample points per axis"),
    "sbg_tol": (float, 1e-8, _pos("sbg_tol"), "relative singular value cutoff"),
    "epsilons": (_parse_list(float), [0.25, 0.125, 0.0625],
                 _strictly_decreasing_eps("epsilons"), "two-scale ladder"),
    "homog_mode": (str.strip, "stationary", None, "stationary | evolutive"),
    "z_samples": (int, 9, _pos("z_samples"), "slow-variable table samples"),
    "p_samples": (int, 33, _pos("p_samples"), "momentum table samples"),
    "p_max": (float, 2.0, _pos("p_max"), "momentum table half-range"),
    "cell_n": (int, 64, _pos("cell_n"), "cell problem grid nodes"),
    "cell_deltas": (_parse_list(float), [3e-2, 1e-2, 3e-3],
                    _decreasing("cell_deltas"), "cell problem discount schedule"),
    "nodes_per_cell": (int, 32, _pos("nodes_per_cell"),
                       "fine nodes per epsilon cell in studies"),
    "t_eval": (float, 0.5, _pos("t_eval"), "evolutive comparison time"),
    "workers": (int, 1, _pos("workers"), "processes for cell tables"),
    "out_dir": (str.strip, "runs", None, "output directory"),
}

_SCENARIO_PARAM_PREFIX = "param_"


@dataclass
class RunConfig:
    """Validated configuration with all defaults materialized."""

    values: dict = field(default_factory=dict)
    scenario_params: dict = field(default_factory=dict)

    def __getattr__(self, key):
        try:
            return self.__dict__["values"][key]
        except KeyError:
            raise AttributeError(key) from None

    def echo(self):
        lines = [f"{k} = {_fmt(v)}" for k, v in sorted(self.values.items())]
        lines += [f"{_SCENARIO_PARAM_PREFIX}{k} = {_fmt(v)}"
                  for k, v in sorted(self.scenario_params.items())]
        return "\n".join(lines)


def _fmt(v):
    if isinstance(v, list):
        return ",".join(repr(x) for x in v)
    return repr(v) if isinstance(v, str) else str(v)


def default_config(**overrides):
    cfg = RunConfig(values={k: spec[1] for k, spec in SCHEMA.items()})
    for key, val in overrides.items():
        if key.startswith(_SCENARIO_PARAM_PREFIX):
            cfg.scenario_params[key[len(_SCENARIO_PARAM_PREFIX):]] = val
        elif key in SCHEMA:
            cfg.values[key] = val
        else:
            raise ConfigError(f"unknown configuration key {key!r}")
    validate(cfg)
    return cfg


def load_config(path, **overrides):
    """Parse and validate a configuration file; overrides win over the file."""
    raw = {}
    raw_params = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{lineno}: expected `key = value`, got {line!r}")
            key, _, val = stripped.partition("=")
            key = key.strip()
            val = val.strip()
            if key.startswith(_SCENARIO_PARAM_PREFIX):
                pname = key[len(_SCENARIO_PARAM_PREFIX):]
                try:
                    raw_params[pname] = float(val)
                except ValueError as exc:
                    raise ConfigError(f"{path}:{lineno}: bad value for {key}: {exc}") from exc
                continue
            if key not in SCHEMA:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            parser = SCHEMA[key][0]
            try:
                raw[key] = parser(val)
            except (ValueError, ConfigError) as exc:
                raise ConfigError(f"{path}:{lineno}: bad value for {key}: {exc}") from exc
    cfg = RunConfig(values={k: spec[1] for k, spec in SCHEMA.items()})
    cfg.values.update(raw)
    cfg.scenario_params.update(raw_params)
    for key, val in overrides.items():
        if key.startswith(_SCENARIO_PARAM_PREFIX):
            cfg.scenario_params[key[len(_SCENARIO_PARAM_PREFIX):]] = val
        else:
            if key not in SCHEMA:
                raise ConfigError(f"unknown configuration key {key!r}")
            cfg.values[key] = val
    validate(cfg)
    return cfg


def validate(cfg):
    scen = cfg.values.get("scenario")
    if scen not in SYSTEM_NAMES and scen not in OSC_NAMES:
        raise ConfigError(
            f"scenario must be one of {SYSTEM_NAMES + OSC_NAMES}, got {scen!r}"
        )
    defaults = scenario_defaults(scen)
    for pname in cfg.scenario_params:
        if pname not in defaults:
            raise ConfigError(f"scenario {scen!r} has no parameter {pname!r}")
    for key, (_, _, validator, _) in SCHEMA.items():
        if validator is not None:
            validator(cfg.values[key])
    if cfg.values["t1"] >= cfg.values["t2"]:
        raise ConfigError(
            f"t1 must be below t2, got t1={cfg.values['t1']} t2={cfg.values['t2']}"
        )
    mode = cfg.values["homog_mode"]
    if mode not in ("stationary", "evolutive"):
        raise ConfigError(f"homog_mode must be stationary or evolutive, got {mode!r}")
    return cfg


def schema_text():
    width = max(len(k) for k in SCHEMA)
    lines = ["# configuration schema (key, default, meaning)"]
    for key, (_, default, _, help_) in SCHEMA.items():
        lines.append(f"{key.ljust(width)} = {_fmt(default) if default is not None else 'auto'}  # {help_}")
    lines.append(f"{_SCENARIO_PARAM_PREFIX}<name>".ljust(width) + "      # scenario parameter override, numeric")
    return "\n".join(lines)
