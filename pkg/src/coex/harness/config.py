"""Flat ``key = value`` experiment files.

One assignment per line; ``#`` starts a comment. Keys are the protocol
settings below, any :class:`COEConfig` field, or ``env.<param>`` for an
environment constructor argument. Sweep grids use the same format, with
``|`` separating alternative values of a key::

    env = foraging
    env.max_steps = 50
    variant = coe
    c_act = 0 | 0.01 | 0.05
    seeds = 0,1,2
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from coex.envs import make_env
from coex.errors import ConfigError
from coex.marlcore.config import COEConfig

REQUIRED = ("env", "variant")
PROTOCOL_DEFAULTS = {
    "total_steps": 200_000,
    "eval_interval": 10_000,
    "eval_episodes": 20,
    "seeds": (0, 1, 2, 3, 4),
    "out_dir": "runs",
}
SWEEP_SEEDS = (0, 1, 2)
_COE_TYPES = {f.name: f.type for f in fields(COEConfig)}
KEYS = ("env", "variant", "c_act", "c_rew", "c_boot", "gamma", "lr", "k", "batch", "buffer", "tau",
        "total_steps", "eval_interval", "eval_episodes", "seeds", "epsilon_start", "epsilon_end",
        "epsilon_anneal", "mixer", "out_dir")
EXTRA_KEYS = tuple(name for name in _COE_TYPES if name not in KEYS)


@dataclass
class ExperimentSpec:
    env: str
    config: COEConfig
    env_params: dict = field(default_factory=dict)
    total_steps: int = PROTOCOL_DEFAULTS["total_steps"]
    eval_interval: int = PROTOCOL_DEFAULTS["eval_interval"]
    eval_episodes: int = PROTOCOL_DEFAULTS["eval_episodes"]
    seeds: tuple = PROTOCOL_DEFAULTS["seeds"]
    out_dir: str = PROTOCOL_DEFAULTS["out_dir"]
    name: str = "run"

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.total_steps < 1 or self.eval_interval < 1 or self.eval_episodes < 1:
            raise ConfigError("total_steps, eval_interval and eval_episodes must be positive")
        if self.total_steps % self.eval_interval:
            raise ConfigError(f"eval_interval {self.eval_interval} does not divide total_steps {self.total_steps}")
        if not self.seeds:
            raise ConfigError("seed list is empty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seed list has duplicates")

    def make_env(self):
        return make_env(self.env, **self.env_params)

    def run_dir(self, root=None):
        return Path(root if root is not None else self.out_dir) / self.name

    def to_dict(self):
        cfg = {f.name: getattr(self.config, f.name) for f in fields(COEConfig)}
        return {
            "name": self.name,
            "env": self.env,
            "env_params": dict(self.env_params),
            "total_steps": self.total_steps,
            "eval_interval": self.eval_interval,
            "eval_episodes": self.eval_episodes,
            "seeds": list(self.seeds),
            "out_dir": str(self.out_dir),
            "config": cfg,
        }


def _scalar(raw):
    """Best-effort literal for environment parameters."""
    low = raw.lower()
    if low in ("true", "false"):
        return low == "true"
    if low in ("none", "null"):
        return None
    for cast in (int, float):
        try:
            return cast(raw)
        except ValueError:
            pass
    return raw


def _typed(key, raw, lineno):
    """Convert one raw value for ``key``; numbers must be nonnegative."""
    try:
        if key == "seeds":
            value = tuple(int(x) for x in raw.split(",") if x.strip())
            if not value:
                raise ValueError("empty seed list")
            if min(value) < 0:
                raise ConfigError("seeds must be nonnegative", lineno)
            return value
        if key in ("env", "out_dir"):
            return raw
        if key in ("total_steps", "eval_interval", "eval_episodes"):
            value = int(raw)
        elif key.startswith("env."):
            value = _scalar(raw)
        else:
            kind = _COE_TYPES[key]
            if kind in ("bool", bool):
                if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
                    raise ValueError(f"not a boolean: {raw!r}")
                return raw.lower() in ("true", "1", "yes")
            if kind in ("int", int):
                value = int(raw)
            elif kind in ("float", float):
                value = float(raw)
            else:
                return raw
    except ValueError as exc:
        raise ConfigError(f"malformed value for {key!r}: {exc}", lineno) from None
    if isinstance(value, (int, float)) and not isinstance(value, bool) and value < 0:
        raise ConfigError(f"{key} must be nonnegative, got {value}", lineno)
    return value


def _known(key):
    return key in KEYS or key in EXTRA_KEYS or (key.startswith("env.") and len(key) > 4)


def read_assignments(text, allow_alternatives=False):
    """Parse lines into ``{key: ([values], lineno)}`` in file order."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"expected 'key = value', got {body!r}", lineno)
        key, raw = (part.strip() for part in body.split("=", 1))
        if not _known(key):
            raise ConfigError(f"unknown key {key!r}", lineno)
        if key in out:
            raise ConfigError(f"duplicate key {key!r}", lineno)
        alternatives = [r.strip() for r in raw.split("|")] if allow_alternatives else [raw]
        if any(not r for r in alternatives):
            raise ConfigError(f"missing value for {key!r}", lineno)
        out[key] = ([_typed(key, r, lineno) for r in alternatives], lineno)
    for key in REQUIRED:
        if key not in out:
            raise ConfigError(f"missing required key {key!r}", len(text.splitlines()) + 1)
    return out


def build_spec(values, name="run", lines=None):
    """ExperimentSpec from a ``{key: value}`` mapping of typed values."""
    lines = lines or {}
    env_params = {k[4:]: v for k, v in values.items() if k.startswith("env.")}
    cfg_kwargs = {k: v for k, v in values.items() if k in _COE_TYPES}
    protocol = {k: values[k] for k in PROTOCOL_DEFAULTS if k in values}
    try:
        cfg = COEConfig(**cfg_kwargs)
        spec = ExperimentSpec(env=values["env"], config=cfg, env_params=env_params, name=name, **protocol)
        spec.make_env()
    except ConfigError as exc:
        if exc.line is None:
            raise ConfigError(str(exc), _culprit(str(exc), lines)) from None
        raise
    return spec


def _culprit(message, lines):
    """Line of the key named earliest in ``message`` (whole-word match)."""
    hits = []
    for key, lineno in lines.items():
        name = key[4:] if key.startswith("env.") else key
        m = re.search(rf"(?<![\w.]){re.escape(name)}(?!\w)", message)
        if m:
            hits.append((m.start(), lineno))
    return min(hits)[1] if hits else None


def parse_config_text(text, name="run"):
    assignments = read_assignments(text)
    values = {k: v[0] for k, (v, _) in assignments.items()}
    return build_spec(values, name=name, lines={k: ln for k, (_, ln) in assignments.items()})


def parse_config(path):
    """Read an experiment file; the run is named after the file stem."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config_text(text, name=path.stem)


@dataclass
class GridCell:
    label: str
    spec: ExperimentSpec


def parse_grid_text(text, name="sweep"):
    """Expand a grid file into cells (cartesian product in file order).

    Cells whose bonus scales are all zero are dropped for the optimistic
    variants, since that setting is plain greedy value decomposition.
    Unless the grid sets ``seeds``, each cell runs three seeds.
    """
    assignments = read_assignments(text, allow_alternatives=True)
    keys = list(assignments)
    lines = {k: ln for k, (_, ln) in assignments.items()}
    cells = []
    for combo in itertools.product(*(assignments[k][0] for k in keys)):
        values = dict(zip(keys, combo))
        values.setdefault("seeds", SWEEP_SEEDS)
        varied = [k for k in keys if len(assignments[k][0]) > 1]
        label = ",".join(f"{k}={_fmt(values[k])}" for k in varied) or "base"
        spec = build_spec(values, name=f"{name}/{_slug(label)}", lines=lines)
        if spec.config.variant != "eps_greedy" and not any(spec.config.effective_scales()):
            continue
        cells.append(GridCell(label, spec))
    if not cells:
        raise ConfigError("grid has no runnable cells")
    return cells


def parse_grid(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read grid {path}: {exc.strerror}") from None
    return parse_grid_text(text, name=path.stem)


def _fmt(v):
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    return f"{v:g}" if isinstance(v, float) else str(v)


def _slug(label):
    return "".join(ch if ch.isalnum() or ch in "._=-" else "_" for ch in label)


def with_overrides(spec, **changes):
    """Copy of ``spec`` with protocol fields replaced (config untouched)."""
    return replace(spec, **changes)
