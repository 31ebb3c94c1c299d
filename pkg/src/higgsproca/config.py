"""Experiment configuration: a flat INI document with one section per module.

Example::

    [experiment]
    schema_version = 1
    scenario = "proca-cov"
    seed = 7
    out = "runs/proca-cov"

    [model]
    d = 2
    half_width = 3
    eps = 0.5

Values are JSON literals (numbers, strings in double quotes, lists,
``true``/``false``/``null``); bare words are read as strings.  Keys that a
scenario does not set fall back to that scenario's defaults.  The sections
are ``experiment``, ``model``, ``sampler``, ``lattice``, ``forms`` and
``scenario`` (free-form knobs specific to one scenario).
"""

from __future__ import annotations

import configparser
import io
import json
from dataclasses import dataclass, field

from .errors import InvalidParameterError

SCHEMA_VERSION = 1
SECTIONS = ("model", "sampler", "lattice", "forms", "scenario")


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text.strip()


def _format_value(v) -> str:
    return json.dumps(v)


@dataclass
class ExperimentConfig:
    scenario: str
    seed: int = 0
    out: str | None = None
    schema_version: int = SCHEMA_VERSION
    model: dict = field(default_factory=dict)
    sampler: dict = field(default_factory=dict)
    lattice: dict = field(default_factory=dict)
    forms: dict = field(default_factory=dict)
    scenario_opts: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.schema_version != SCHEMA_VERSION:
            raise InvalidParameterError(f"unsupported schema version {self.schema_version}")
        if not isinstance(self.scenario, str):
            raise InvalidParameterError("scenario name must be a string")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or not 0 <= self.seed < 2**63:
            raise InvalidParameterError(f"seed must be a non-negative integer, got {self.seed!r}")

    def section(self, name: str) -> dict:
        if name == "scenario":
            return self.scenario_opts
        if name not in SECTIONS:
            raise InvalidParameterError(f"unknown section {name!r}")
        return getattr(self, name)

    def get(self, section: str, key: str, default=None):
        return self.section(section).get(key, default)

    def with_overrides(self, scenario=None, seed=None, out=None) -> "ExperimentConfig":
        """Command-line flags take precedence over the file."""
        return ExperimentConfig(
            scenario=self.scenario if scenario is None else scenario,
            seed=self.seed if seed is None else int(seed),
            out=self.out if out is None else out,
            schema_version=self.schema_version,
            model=dict(self.model), sampler=dict(self.sampler), lattice=dict(self.lattice),
            forms=dict(self.forms), scenario_opts=dict(self.scenario_opts))

    def as_dict(self) -> dict:
        return {"schema_version": self.schema_version, "scenario": self.scenario, "seed": self.seed,
                "out": self.out, **{s: dict(self.section(s)) for s in SECTIONS}}

    def dumps(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        cp["experiment"] = {"schema_version": _format_value(self.schema_version),
                            "scenario": _format_value(self.scenario),
                            "seed": _format_value(self.seed),
                            "out": _format_value(self.out)}
        for s in SECTIONS:
            sec = self.section(s)
            if sec:
                cp[s] = {k: _format_value(v) for k, v in sec.items()}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.dumps())


def loads(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise InvalidParameterError(f"malformed config: {exc}") from exc
    unknown = set(cp.sections()) - {"experiment", *SECTIONS}
    if unknown:
        raise InvalidParameterError(f"unknown config sections {sorted(unknown)}")
    if "experiment" not in cp:
        raise InvalidParameterError("config needs an [experiment] section")
    exp = {k: _parse_value(v) for k, v in cp["experiment"].items()}
    extra = set(exp) - {"schema_version", "scenario", "seed", "out"}
    if extra:
        raise InvalidParameterError(f"unknown experiment keys {sorted(extra)}")
    if "schema_version" not in exp:
        raise InvalidParameterError("schema_version is required")
    secs = {s: ({k: _parse_value(v) for k, v in cp[s].items()} if s in cp else {}) for s in SECTIONS}
    return ExperimentConfig(scenario=exp.get("scenario", ""), seed=exp.get("seed", 0),
                            out=exp.get("out"), schema_version=exp["schema_version"],
                            model=secs["model"], sampler=secs["sampler"], lattice=secs["lattice"],
                            forms=secs["forms"], scenario_opts=secs["scenario"])


def load(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())
