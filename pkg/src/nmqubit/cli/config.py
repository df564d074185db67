"""Experiment configuration: JSON ingestion, validation, defaults and sweeps."""

from __future__ import annotations

import copy
import enum
import json
import math
import os
import warnings
from dataclasses import dataclass, field

import numpy as np

from ..dynamics import IntegratorSettings, MasterEquationKind
from ..model import ModelParams
from ..thermo import DriveKind


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the offending field."""


class Task(enum.Enum):
    VOLUME = "volume"
    NM_MEASURE = "nm_measure"
    THRESHOLD = "threshold"
    POWER_LAW_FIT = "fit_powerlaw"
    WORK = "work"
    RATE_ERROR = "rate_error"
    COMPARE_ME = "compare_me"

    @classmethod
    def parse(cls, value) -> "Task":
        if isinstance(value, cls):
            return value
        key = str(value).lower().replace("-", "_")
        aliases = {"nm": "nm_measure", "powerlawfit": "fit_powerlaw", "power_law_fit": "fit_powerlaw",
                   "rateerror": "rate_error", "compareme": "compare_me", "nmmeasure": "nm_measure"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            choices = ", ".join(t.value for t in cls)
            raise ConfigError(f"task: unknown task {value!r} (choose from {choices})") from None


MODEL_KEYS = ("omega1", "omega2", "J", "kappa_bar", "beta", "lambda0", "omega_d")
REQUIRED_MODEL_KEYS = ("omega1", "omega2", "J", "kappa_bar", "beta")
INTEGRATOR_KEYS = ("rel_tol", "abs_tol", "max_step", "sample_dt")

# task options and their defaults; None means "derived from the model at run time"
TASK_OPTIONS: dict[Task, dict] = {
    Task.VOLUME: {"t_end": None},
    Task.NM_MEASURE: {"t_end": None},
    Task.THRESHOLD: {"t_end": None, "resolution": 0.01, "bracket": [0.01, 100.0], "scan_points": 9},
    Task.POWER_LAW_FIT: {
        "t_end": None,
        "resolution": 0.01,
        "bracket": [0.01, 100.0],
        "scan_points": 9,
        "points": None,
        "temperatures": None,
    },
    Task.WORK: {"t_end": None, "drive": "dressed", "initial_bloch": [0.0, 0.0, -1.0], "samples_per_period": 128},
    Task.RATE_ERROR: {
        "j_values": None,
        "beta_omega1_values": [0.1, 0.2, 0.5, 1.0, 2.0, 5.0],
    },
    Task.COMPARE_ME: {"t_end": None, "initial_bloch": [1.0, 0.0, 0.0]},
}
COMMON_KEYS = ("task", "equation", "sweep", "integrator", "output_path", "workers", "reference")


@dataclass
class SweepSpec:
    param: str
    values: list[float]

    def to_dict(self) -> dict:
        return {"param": self.param, "values": list(self.values)}


@dataclass
class ExperimentConfig:
    model: ModelParams
    equation: MasterEquationKind
    task: Task
    integrator: IntegratorSettings
    output_path: str
    options: dict
    sweep: SweepSpec | None = None
    workers: int = 1
    reference: dict | None = None
    provenance: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        """Resolved configuration, itself a valid strict config document."""
        doc = {k: v for k, v in self.model.to_dict().items()}
        doc["task"] = self.task.value
        doc["equation"] = self.equation.value
        doc["integrator"] = {k: v for k, v in self.integrator.to_dict().items() if k in INTEGRATOR_KEYS}
        doc["output_path"] = self.output_path
        doc["workers"] = self.workers
        if self.sweep is not None:
            doc["sweep"] = self.sweep.to_dict()
        if self.reference is not None:
            doc["reference"] = dict(self.reference)
        doc.update(copy.deepcopy(self.options))
        return doc

    def children(self) -> list["ExperimentConfig"]:
        """One config per sweep value (or just ``self`` without a sweep)."""
        if self.sweep is None:
            return [self]
        out = []
        for value in self.sweep.values:
            child = copy.copy(self)
            child.model = _build_model(self.model.replace(**{self.sweep.param: value}).to_dict(), self.task)
            child.sweep = None
            out.append(child)
        return out


def _number(name: str, value, *, allow_none=False, allow_inf=False) -> float | None:
    if value is None and allow_none:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        if allow_inf and value in ("inf", "Infinity"):
            return math.inf
        raise ConfigError(f"{name}: expected a number, got {value!r}")
    value = float(value)
    if math.isnan(value) or (math.isinf(value) and not allow_inf):
        raise ConfigError(f"{name}: must be finite, got {value}")
    return value


def _build_model(raw: dict, task: Task) -> ModelParams:
    for key in ("omega1", "omega2"):
        if raw[key] <= 0:
            raise ConfigError(f"{key}: must be positive, got {raw[key]}")
    if raw["beta"] <= 0:
        raise ConfigError(f"beta: must be positive, got {raw['beta']}")
    if raw["kappa_bar"] < 0:
        raise ConfigError(f"kappa_bar: must be non-negative, got {raw['kappa_bar']}")
    if raw["J"] < 0:
        raise ConfigError(f"J: must be non-negative, got {raw['J']}")
    if raw.get("lambda0", 0) < 0:
        raise ConfigError(f"lambda0: must be non-negative, got {raw['lambda0']}")
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return ModelParams(**raw)
    except ValueError as exc:
        name = str(exc).split()[0]
        raise ConfigError(f"{name}: {exc}") from None


def _expand_sweep(raw) -> SweepSpec:
    if not isinstance(raw, dict):
        raise ConfigError("sweep: expected an object with 'param' and values")
    unknown = set(raw) - {"param", "values", "start", "stop", "num", "spacing"}
    if unknown:
        raise ConfigError(f"sweep: unknown keys {sorted(unknown)}")
    param = raw.get("param")
    if param not in MODEL_KEYS:
        raise ConfigError(f"sweep.param: {param!r} is not a model parameter ({', '.join(MODEL_KEYS)})")
    if "values" in raw:
        if set(raw) & {"start", "stop", "num", "spacing"}:
            raise ConfigError("sweep: give either 'values' or 'start'/'stop'/'num', not both")
        values = [_number(f"sweep.values[{i}]", v) for i, v in enumerate(raw["values"])]
    else:
        try:
            start = _number("sweep.start", raw["start"])
            stop = _number("sweep.stop", raw["stop"])
            num = raw["num"]
        except KeyError as exc:
            raise ConfigError(f"sweep.{exc.args[0]}: required for a range sweep") from None
        if not isinstance(num, int) or isinstance(num, bool) or num < 1:
            raise ConfigError("sweep.num: must be a positive integer")
        spacing = raw.get("spacing", "linear")
        if spacing == "linear":
            values = np.linspace(start, stop, num).tolist()
        elif spacing == "log":
            if start <= 0 or stop <= 0:
                raise ConfigError("sweep.start: log spacing needs positive bounds")
            values = np.geomspace(start, stop, num).tolist()
        else:
            raise ConfigError(f"sweep.spacing: expected 'linear' or 'log', got {spacing!r}")
    if not values:
        raise ConfigError("sweep.values: empty sweep")
    return SweepSpec(param, sorted(values))


def _check_options(task: Task, raw: dict, model: ModelParams) -> dict:
    opts = dict(raw)
    if task in (Task.VOLUME, Task.NM_MEASURE, Task.THRESHOLD, Task.POWER_LAW_FIT, Task.COMPARE_ME, Task.WORK):
        if opts.get("t_end") is not None and _number("t_end", opts["t_end"]) <= 0:
            raise ConfigError("t_end: must be positive")
    if task in (Task.VOLUME, Task.NM_MEASURE, Task.THRESHOLD, Task.POWER_LAW_FIT):
        if model.lambda0 != 0:
            raise ConfigError(f"lambda0: task {task.value} analyses the undriven CQ and needs lambda0 = 0")
        if model.kappa_bar == 0 and opts.get("t_end") is None:
            raise ConfigError("t_end: required when kappa_bar = 0")
    if task in (Task.THRESHOLD, Task.POWER_LAW_FIT):
        if model.kappa_bar == 0:
            raise ConfigError("kappa_bar: threshold search needs kappa_bar > 0")
        if _number("resolution", opts["resolution"]) <= 0:
            raise ConfigError("resolution: must be positive")
        b = opts["bracket"]
        if not (isinstance(b, list) and len(b) == 2 and 0 < _number("bracket[0]", b[0]) < _number("bracket[1]", b[1])):
            raise ConfigError(f"bracket: expected [lo, hi] with 0 < lo < hi, got {b!r}")
        if not isinstance(opts["scan_points"], int) or opts["scan_points"] < 2:
            raise ConfigError("scan_points: must be an integer >= 2")
    if task is Task.POWER_LAW_FIT:
        if (opts["points"] is None) == (opts["temperatures"] is None):
            raise ConfigError("points: give exactly one of 'points' or 'temperatures'")
        if opts["points"] is not None:
            pts = opts["points"]
            if not isinstance(pts, list) or len(pts) < 3 or any(not isinstance(q, list) or len(q) != 2 for q in pts):
                raise ConfigError("points: expected at least three [omega2_beta, threshold] pairs")
            for i, (a, b) in enumerate(pts):
                _number(f"points[{i}][0]", a)
                if _number(f"points[{i}][1]", b) <= 1:
                    raise ConfigError(f"points[{i}]: threshold must exceed 1 for the log fit, got {b}")
        else:
            temps = opts["temperatures"]
            if not isinstance(temps, list) or len(temps) < 3:
                raise ConfigError("temperatures: expected at least three omega2*beta values")
            for i, t in enumerate(temps):
                if _number(f"temperatures[{i}]", t) <= 0:
                    raise ConfigError(f"temperatures[{i}]: must be positive")
    if task is Task.WORK:
        if model.lambda0 <= 0:
            raise ConfigError("lambda0: the work task needs a positive drive amplitude")
        try:
            DriveKind.parse(opts["drive"])
        except ValueError:
            raise ConfigError(f"drive: expected 'dressed' or 'bare', got {opts['drive']!r}") from None
        if not isinstance(opts["samples_per_period"], int) or opts["samples_per_period"] < 8:
            raise ConfigError("samples_per_period: must be an integer >= 8")
    if task in (Task.WORK, Task.COMPARE_ME):
        r = opts["initial_bloch"]
        if not (isinstance(r, list) and len(r) == 3):
            raise ConfigError("initial_bloch: expected three components")
        r = [_number(f"initial_bloch[{i}]", x) for i, x in enumerate(r)]
        if math.fsum(x * x for x in r) > 1 + 1e-12:
            raise ConfigError("initial_bloch: vector lies outside the Bloch ball")
    if task is Task.COMPARE_ME and model.kappa_bar == 0 and opts.get("t_end") is None:
        raise ConfigError("t_end: required when kappa_bar = 0")
    if task is Task.RATE_ERROR:
        if model.kappa_bar == 0:
            raise ConfigError("kappa_bar: rate errors need kappa_bar > 0")
        for key in ("j_values", "beta_omega1_values"):
            vals = opts[key]
            if vals is None:
                continue
            if not isinstance(vals, list) or not vals:
                raise ConfigError(f"{key}: expected a non-empty list")
            for i, v in enumerate(vals):
                x = _number(f"{key}[{i}]", v)
                if x < 0 or (key == "beta_omega1_values" and x == 0):
                    raise ConfigError(f"{key}[{i}]: out of range ({v})")
    return opts


def parse_config(source, *, strict: bool = True, overrides: dict | None = None) -> ExperimentConfig:
    """Parse and validate a JSON experiment config.

    ``source`` is a path, a JSON string or an already-decoded dict.
    ``overrides`` (from the command line) take precedence over the document.
    Every value filled from a default is recorded in ``provenance``.
    """
    if isinstance(source, dict):
        doc = copy.deepcopy(source)
    else:
        text = str(source)
        if not text.lstrip().startswith("{"):
            if not os.path.exists(text):
                raise ConfigError(f"config: file not found: {text}")
            with open(text, encoding="utf-8") as fh:
                text = fh.read()
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise ConfigError("config: top level must be a JSON object")

    provenance = {k: "config" for k in doc}
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key in INTEGRATOR_KEYS:
            doc.setdefault("integrator", {})
            doc["integrator"] = dict(doc["integrator"], **{key: value})
            provenance[f"integrator.{key}"] = "cli"
        elif key == "task" and doc.get("task") not in (None, value) and Task.parse(doc["task"]) != Task.parse(value):
            raise ConfigError(f"task: config says {doc['task']!r} but the command is {value!r}")
        else:
            doc[key] = value
            provenance[key] = "cli"

    if "task" not in doc:
        raise ConfigError("task: required")
    task = Task.parse(doc["task"])

    allowed = set(MODEL_KEYS) | set(COMMON_KEYS) | set(TASK_OPTIONS[task])
    unknown = sorted(set(doc) - allowed)
    if unknown and strict:
        raise ConfigError(f"{unknown[0]}: unknown key for task {task.value!r} (strict mode)")

    missing = [k for k in REQUIRED_MODEL_KEYS if k not in doc]
    if missing:
        raise ConfigError(f"{missing[0]}: required model parameter missing")
    raw_model = {}
    for key in MODEL_KEYS:
        if key in ("lambda0", "omega_d") and key not in doc:
            continue
        raw_model[key] = _number(key, doc[key], allow_none=key == "omega_d", allow_inf=key == "beta")
    if task is Task.WORK and "lambda0" not in raw_model:
        raw_model["lambda0"] = 0.01 * raw_model["omega2"]
        provenance["lambda0"] = "default (0.01 * omega2)"
    for key in ("lambda0", "omega_d"):
        if key not in raw_model:
            raw_model[key] = 0.0 if key == "lambda0" else None
            provenance[key] = "default"
    model = _build_model(raw_model, task)

    try:
        equation = MasterEquationKind.parse(doc.get("equation", "local"))
    except ValueError as exc:
        raise ConfigError(f"equation: {exc}") from None
    if "equation" not in doc:
        provenance["equation"] = "default"

    integ = doc.get("integrator", {}) or {}
    if not isinstance(integ, dict):
        raise ConfigError("integrator: expected an object")
    bad = sorted(set(integ) - set(INTEGRATOR_KEYS))
    if bad:
        raise ConfigError(f"integrator.{bad[0]}: unknown integrator setting")
    kw = {}
    for key in INTEGRATOR_KEYS:
        if integ.get(key) is None:
            provenance.setdefault(f"integrator.{key}", "default")
            continue
        kw[key] = _number(f"integrator.{key}", integ[key], allow_inf=key == "max_step")
        if kw[key] <= 0:
            raise ConfigError(f"integrator.{key}: must be positive")
        provenance.setdefault(f"integrator.{key}", "config")
    integrator = IntegratorSettings(**kw)

    options = {}
    for key, default in TASK_OPTIONS[task].items():
        if key in doc:
            options[key] = copy.deepcopy(doc[key])
        else:
            options[key] = copy.deepcopy(default)
            provenance[key] = "default"
    options = _check_options(task, options, model)

    sweep = _expand_sweep(doc["sweep"]) if doc.get("sweep") is not None else None
    if sweep is not None:
        for v in sweep.values:
            _build_model(dict(model.to_dict(), **{sweep.param: v}), task)

    workers = doc.get("workers", 1)
    if not isinstance(workers, int) or isinstance(workers, bool) or workers < 1:
        raise ConfigError("workers: must be a positive integer")
    if "workers" not in doc:
        provenance["workers"] = "default"

    reference = doc.get("reference")
    if reference is not None:
        if not isinstance(reference, dict) or set(reference) - {"omega2_hz", "angular"}:
            raise ConfigError("reference: expected {'omega2_hz': <Hz>, 'angular': <bool>}")
        if _number("reference.omega2_hz", reference.get("omega2_hz")) <= 0:
            raise ConfigError("reference.omega2_hz: must be positive")
        reference = {"omega2_hz": float(reference["omega2_hz"]), "angular": bool(reference.get("angular", False))}

    output_path = doc.get("output_path", "results")
    if not isinstance(output_path, str) or not output_path:
        raise ConfigError("output_path: expected a path string")
    if "output_path" not in doc:
        provenance["output_path"] = "default"

    return ExperimentConfig(
        model=model,
        equation=equation,
        task=task,
        integrator=integrator,
        output_path=output_path,
        options=options,
        sweep=sweep,
        workers=workers,
        reference=reference,
        provenance=provenance,
    )
