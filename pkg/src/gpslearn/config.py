"""Experiment configuration: YAML in, validated dataclasses out.

Errors carry the line of the offending key so messages point into the file.
"""

from dataclasses import asdict, dataclass, field, fields
import hashlib
import json
from pathlib import Path

import yaml

from .cost import CostParams
from .dynamics import DynamicsFitConfig
from .envs import EnvSpec, make_env
from .errors import ConfigError
from .gps import GpsConfig
from .trajopt import TrajOptConfig

MODES = ("traj", "gps", "eval", "replay")
SCHEMA_VERSION = 1
DEFAULT_THRESHOLD = 1e-2


@dataclass(frozen=True)
class ConditionConfig:
    env: EnvSpec
    cost: dict  # CostParams fields; target_points filled from the environment when omitted

    def build(self):
        env = make_env(self.env)
        return env, env.default_cost(**self.cost) if "target_points" not in self.cost else CostParams(**self.cost)


@dataclass(frozen=True)
class EvalConfig:
    trials: int = 10
    radii: tuple = (0.0,)
    threshold: float = DEFAULT_THRESHOLD
    stochastic: bool = False
    test_conditions: tuple = ()


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str
    seed: int
    conditions: tuple
    output_dir: str = "runs/default"
    trajopt: TrajOptConfig = field(default_factory=TrajOptConfig)
    gps: GpsConfig | None = None
    eval: EvalConfig | None = None
    artifact: str | None = None
    manifest: str | None = None

    def effective(self):
        """Plain-data echo of every setting after defaults are applied."""
        d = asdict(self)
        d.pop("output_dir")
        return json.loads(json.dumps(d, default=list))

    def content_hash(self):
        blob = json.dumps(self.effective(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


class _Lines:
    """Maps key paths of the YAML document to 1-based line numbers."""

    def __init__(self, node):
        self.lines = {}
        if node is not None:
            self._walk(node, ())

    def _walk(self, node, path):
        self.lines.setdefault(path, node.start_mark.line + 1)
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                p = path + (k.value,)
                self.lines[p] = k.start_mark.line + 1
                self._walk(v, p)
        elif isinstance(node, yaml.SequenceNode):
            for i, v in enumerate(node.value):
                self._walk(v, path + (i,))

    def __call__(self, path):
        path = tuple(path)
        while path not in self.lines and path:
            path = path[:-1]
        return self.lines.get(path)


def _section(data, path, lines, kind=dict):
    value = data
    for key in path:
        value = value.get(key) if isinstance(value, dict) else None
    if value is None:
        return kind()
    if not isinstance(value, kind):
        raise ConfigError(f"'{'.'.join(map(str, path))}' must be a {kind.__name__}", lines(path))
    return value


def _build(cls, raw, path, lines, **extra):
    allowed = {f.name for f in fields(cls)}
    for key in raw:
        if key not in allowed:
            raise ConfigError(
                f"unknown key '{key}' in '{'.'.join(map(str, path)) or 'top level'}'", lines(path + (key,))
            )
    try:
        return cls(**raw, **extra)
    except (TypeError, ValueError) as err:
        bad = next((k for k in raw if k in str(err)), None)
        where = path + (bad,) if bad else path
        raise ConfigError(f"{'.'.join(map(str, path)) or 'config'}: {err}", lines(where)) from None


def _condition(raw, path, lines, env_defaults, cost_defaults):
    if not isinstance(raw, dict):
        raise ConfigError("each condition must be a mapping", lines(path))
    unknown = set(raw) - {"env", "cost"}
    if unknown:
        key = sorted(unknown)[0]
        raise ConfigError(f"unknown key '{key}' in condition", lines(path + (key,)))
    env_raw = {**env_defaults, **(raw.get("env") or {})}
    for sub in ("physical", "target"):
        env_raw[sub] = {**env_defaults.get(sub, {}), **(raw.get("env") or {}).get(sub, {})}
    env = _build(EnvSpec, env_raw, path + ("env",), lines)
    try:
        make_env(env)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"condition environment: {err}", lines(path + ("env",))) from None
    cost_raw = {**cost_defaults, **(raw.get("cost") or {})}
    cond = ConditionConfig(env, cost_raw)
    try:
        _, cost = cond.build()
        cost.check_horizon(env.horizon)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"condition cost: {err}", lines(path + ("cost",))) from None
    return cond


def _conditions(data, key, lines, env_defaults, cost_defaults, required=True):
    items = data.get(key)
    if items is None:
        if required:
            raise ConfigError(f"missing '{key}' list", lines(()))
        return ()
    if not isinstance(items, list) or (required and not items):
        raise ConfigError(f"'{key}' must be a non-empty list", lines((key,)))
    return tuple(_condition(c, (key, i), lines, env_defaults, cost_defaults) for i, c in enumerate(items))


TOP_KEYS = {
    "mode",
    "seed",
    "output_dir",
    "env_defaults",
    "cost_defaults",
    "conditions",
    "trajopt",
    "dynamics",
    "gps",
    "eval",
    "manifest",
}


def parse_config(text, overrides=None):
    """Parse YAML text into an :class:`ExperimentConfig`; ``overrides`` replaces top-level keys."""
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as err:
        mark = err.problem_mark or err.context_mark
        raise ConfigError(f"YAML syntax: {err.problem}", mark.line + 1 if mark else None) from None
    lines = _Lines(node)
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a mapping", 1)
    data = {**data, **(overrides or {})}
    for key in data:
        if key not in TOP_KEYS:
            raise ConfigError(f"unknown top-level key '{key}'", lines((key,)))

    mode = data.get("mode")
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {mode!r}", lines(("mode",)))
    if "seed" not in data:
        raise ConfigError("'seed' is required (no wall-clock seeding)", lines(()))
    seed = data["seed"]
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed must be a nonnegative integer", lines(("seed",)))

    if mode == "replay":
        manifest = data.get("manifest")
        if not isinstance(manifest, str):
            raise ConfigError("replay mode needs a 'manifest' path", lines(("mode",)))
        return ExperimentConfig(mode, seed, (), str(data.get("output_dir", "runs/replay")), manifest=manifest)

    env_defaults = _section(data, ("env_defaults",), lines)
    cost_defaults = _section(data, ("cost_defaults",), lines)
    conditions = _conditions(data, "conditions", lines, env_defaults, cost_defaults)

    dyn = _build(DynamicsFitConfig, _section(data, ("dynamics",), lines), ("dynamics",), lines)
    traj = _build(TrajOptConfig, _section(data, ("trajopt",), lines), ("trajopt",), lines, dynamics=dyn)

    gps = None
    if mode == "gps" or "gps" in data:
        raw = dict(_section(data, ("gps",), lines))
        if "hidden" in raw:
            raw["hidden"] = tuple(raw["hidden"])
        gps = _build(GpsConfig, raw, ("gps",), lines, traj=traj)

    ev = None
    if "eval" in data:
        raw = dict(_section(data, ("eval",), lines))
        tests = ()
        if "test_conditions" in raw:
            tests = _conditions(raw, "test_conditions", _Sub(lines, ("eval",)), env_defaults, cost_defaults)
            raw.pop("test_conditions")
        if "radii" in raw:
            raw["radii"] = tuple(float(r) for r in raw["radii"])
        ev = _build(EvalConfig, raw, ("eval",), lines, test_conditions=tests)
        if ev.trials < 1 or not ev.threshold > 0 or any(r < 0 for r in ev.radii):
            raise ConfigError("eval needs trials >= 1, threshold > 0 and nonnegative radii", lines(("eval",)))

    out = data.get("output_dir", "runs/default")
    if not isinstance(out, str):
        raise ConfigError("output_dir must be a string", lines(("output_dir",)))
    return ExperimentConfig(mode, seed, conditions, out, traj, gps, ev)


class _Sub:
    """Line lookup for a nested section."""

    def __init__(self, lines, prefix):
        self.inner, self.prefix = lines, tuple(prefix)

    def __call__(self, path):
        return self.inner(self.prefix + tuple(path))


def load_config(path, overrides=None):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from None
    return parse_config(text, overrides)


def bundled_configs():
    """Paths of the experiment files shipped with the package."""
    return sorted((Path(__file__).parent / "configs").glob("*.yaml"))


def config_from_effective(d, output_dir):
    """Rebuild an :class:`ExperimentConfig` from a manifest's config echo."""

    def cond(c):
        return ConditionConfig(EnvSpec(**c["env"]), dict(c["cost"]))

    traj_raw = dict(d["trajopt"])
    traj = TrajOptConfig(**{**traj_raw, "dynamics": DynamicsFitConfig(**traj_raw["dynamics"])})
    gps = None
    if d.get("gps"):
        g = dict(d["gps"])
        g.pop("traj")
        gps = GpsConfig(**{**g, "hidden": tuple(g["hidden"]), "traj": traj})
    ev = None
    if d.get("eval"):
        e = dict(d["eval"])
        ev = EvalConfig(
            trials=e["trials"],
            radii=tuple(e["radii"]),
            threshold=e["threshold"],
            stochastic=e["stochastic"],
            test_conditions=tuple(cond(c) for c in e["test_conditions"]),
        )
    return ExperimentConfig(
        mode=d["mode"],
        seed=d["seed"],
        conditions=tuple(cond(c) for c in d["conditions"]),
        output_dir=str(output_dir),
        trajopt=traj,
        gps=gps,
        eval=ev,
        artifact=d.get("artifact"),
    )
