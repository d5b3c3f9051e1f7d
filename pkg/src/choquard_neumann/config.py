"""Plain-text experiment configuration.

A config is a list of ``key=value`` lines.  ``[section]`` headers prefix the
following keys with ``section.``; ``#`` starts a comment.  Parsing is strict:
unknown keys, type mismatches and missing required keys are all collected and
reported together.
"""
from __future__ import annotations

from dataclasses import dataclass, field

COMMANDS = ("constants", "bubble-check", "cherrier", "eigen", "minimize", "asymptotics", "quotient")

REQUIRED = object()


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` lists every problem found."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


def _floats(text):
    return tuple(float(x) for x in text.split(",") if x.strip())


def _strs(text):
    return tuple(x.strip() for x in text.split(",") if x.strip())


_DOMAIN = {
    "domain.kind": (str, REQUIRED),
    "domain.dim": (int, None),
    "domain.extents": (str, REQUIRED),
    "domain.resolution": (str, REQUIRED),
    "domain.dirichlet": (str, ""),
    "domain.grading": (str, "uniform"),
    "domain.r_min": (float, None),
    "domain.flatness.k": (float, None),
    "domain.flatness.c": (float, None),
    "domain.flatness.R": (float, None),
}

_WEIGHT = {
    "weight.plus": (float, 1.0),
    "weight.minus": (float, 2.0),
    "weight.split": (float, 0.5),
    "weight.scale": (float, 1.0),
    "weight.file": (str, None),
}

_EXPS = {"N": (int, REQUIRED), "mu": (float, REQUIRED), "p": (float, None)}

_MINIMIZER = {
    "minimizer.step": (float, 1.0),
    "minimizer.max_iters": (int, 2000),
    "minimizer.grad_tol": (float, 1e-6),
    "minimizer.restarts": (int, 0),
    "minimizer.metric": (str, "sobolev"),
}

_COEFFS = {"a": (float, 0.0), "b": (float, 0.0), "lambda": (float, None)}

SCHEMAS = {
    "constants": {"N": (int, REQUIRED), "mu": (float, REQUIRED)},
    "bubble-check": {"N": (int, REQUIRED), "epsilons": (_floats, (1.0, 0.3, 0.1))},
    "cherrier": {**_EXPS, **_DOMAIN, "eps": (_floats, (0.1, 0.01, 0.001)),
                 "family.scales": (_floats, (0.5, 0.2, 0.1, 0.05))},
    "eigen": {**_DOMAIN, **_WEIGHT},
    "minimize": {**_EXPS, **_DOMAIN, **_WEIGHT, **_COEFFS, **_MINIMIZER},
    "asymptotics": {"N": (int, 4), "mu": (float, 2.0), "k": (float, REQUIRED),
                    "c": (float, 1.0), "R": (float, 1.0), "lambda": (float, REQUIRED),
                    "alpha0": (float, 1.0), "eps_min": (float, 1e-6), "eps_max": (float, 1e-1),
                    "n_eps": (int, 12)},
    "quotient": {**_EXPS, **_DOMAIN, **_WEIGHT, **_COEFFS,
                 "function.scale": (float, 0.1), "method": (str, "auto"),
                 "mc.pairs": (int, 200000)},
}

_TOP = {"command", "seed", "output"}


@dataclass(frozen=True)
class ExperimentConfig:
    """A validated experiment: command, typed parameters, output path and seed."""

    command: str
    params: dict = field(default_factory=dict)
    output_path: str = ""
    seed: int = 0

    def __getitem__(self, key):
        return self.params[key]

    def get(self, key, default=None):
        return self.params.get(key, default)

    def section(self, prefix):
        """Parameters under ``prefix.`` with the prefix stripped."""
        n = len(prefix) + 1
        return {k[n:]: v for k, v in self.params.items() if k.startswith(prefix + ".")}


def _tokenize(text):
    out, errors = [], []
    section = ""
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            continue
        if "=" not in line:
            errors.append(f"line {lineno}: expected key=value, got {raw.strip()!r}")
            continue
        k, v = (s.strip() for s in line.split("=", 1))
        out.append((f"{section}.{k}" if section else k, v, lineno))
    return out, errors


def parse_config(text: str, *, command=None, output_path=None, seed=None) -> ExperimentConfig:
    """Parse and validate a config.

    Keyword arguments override the corresponding top-level keys (they are the
    command-line values).

    Raises
    ------
    ConfigError
        With the full list of problems.
    """
    items, errors = _tokenize(text)
    raw = {}
    for k, v, lineno in items:
        if k in raw:
            errors.append(f"line {lineno}: duplicate key {k!r}")
        raw[k] = v
    file_cmd = raw.pop("command", None)
    if command is not None and file_cmd is not None and file_cmd != command:
        errors.append(f"command {command!r} disagrees with config command {file_cmd!r}")
    cmd = command if command is not None else file_cmd
    if cmd is None:
        raise ConfigError(errors + ["missing required key 'command'"])
    if cmd not in COMMANDS:
        raise ConfigError(errors + [f"unknown command {cmd!r}; expected one of {', '.join(COMMANDS)}"])

    out = raw.pop("output", None)
    seed_text = raw.pop("seed", None)
    if seed is None:
        seed = 0
        if seed_text is not None:
            try:
                seed = int(seed_text)
            except ValueError:
                errors.append(f"seed: expected an integer, got {seed_text!r}")
    if seed is not None and int(seed) < 0:
        errors.append("seed must be nonnegative")
    if output_path is None:
        output_path = out if out is not None else f"{cmd}.csv"

    schema = SCHEMAS[cmd]
    for k in sorted(set(raw) - set(schema)):
        errors.append(f"unknown key {k!r} for command {cmd!r}")
    params = {}
    for k, (conv, default) in schema.items():
        if k in raw:
            try:
                params[k] = conv(raw[k])
            except ValueError:
                name = getattr(conv, "__name__", "value").lstrip("_")
                errors.append(f"{k}: expected {name}, got {raw[k]!r}")
        elif default is REQUIRED:
            errors.append(f"missing required key {k!r}")
        elif default is not None:
            params[k] = default
    errors += _semantic_errors(cmd, params)
    if errors:
        raise ConfigError(errors)
    return ExperimentConfig(cmd, params, str(output_path), int(seed))


def _semantic_errors(cmd, params):
    errors = []
    N, mu = params.get("N"), params.get("mu")
    if isinstance(N, int) and N < 1:
        errors.append("N must be a positive integer")
    if isinstance(N, int) and isinstance(mu, float) and not 0 < mu < N:
        errors.append("mu must lie in (0,N)")
    if cmd == "bubble-check" and isinstance(N, int) and N < 3:
        errors.append("bubble-check needs N >= 3")
    if cmd == "asymptotics":
        if params.get("lambda", 0.0) < 0:
            errors.append("lambda must be nonnegative")
        if not params.get("eps_min", 1.0) < params.get("eps_max", 0.0):
            errors.append("eps_min must be below eps_max")
        if params.get("n_eps", 4) < 2:
            errors.append("n_eps must be at least 2")
        if isinstance(N, int) and N < 3:
            errors.append("asymptotics needs N >= 3")
    if "minimizer.metric" in params and params["minimizer.metric"] not in ("sobolev", "l2"):
        errors.append("minimizer.metric must be 'sobolev' or 'l2'")
    if "method" in params and params["method"] not in ("auto", "direct", "radial", "mc"):
        errors.append("method must be one of auto, direct, radial, mc")
    return errors
