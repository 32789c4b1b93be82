"""Flat ``key = value`` experiment specs.

One assignment per line; ``#`` starts a comment. Lists are comma-separated.
Per-client strategy overrides use ``strategy.<i>.e``, ``strategy.<i>.D`` and
``strategy.<i>.gamma``. Unknown keys are rejected.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path

SCENARIOS = ("effort_sweep", "gamma_sweep", "client_payoff", "server_payoff", "bound_check", "verify")
MODELS = ("ridge", "logistic")
SOURCES = ("synthetic", "mnist_subset")


class ConfigError(ValueError):
    """Invalid experiment spec (exit code 2)."""


@dataclass(frozen=True)
class ExperimentSpec:
    scenario: str = "verify"
    model: str = "ridge"
    data: str = "synthetic"
    n_clients: int = 10
    q: float = 0.4
    samples_per_client: int = 200
    n_test: int = 1000
    feature_dim: int = 5
    num_classes: int = 10
    noise: float = 0.5
    class_sep: float = 1.0
    y_clip: float = 4.0
    l2: float = 0.1
    mnist_images: str = ""
    mnist_labels: str = ""
    # zero means eta = 1/(2L)
    eta: float = 0.0
    T: int = 50
    H: int = 1
    test_mode: str = "full_mean"
    c_l: float = 0.1
    # positive means every client is assigned this batch size, floor unchecked
    assign_D: int = 0
    c_p: tuple[float, ...] = (0.01,)
    seeds: tuple[int, ...] = (0,)
    # negative means data is regenerated per seed
    data_seed: int = -1
    pilot_D: int = 10
    sweep_D: tuple[int, ...] = (10, 50)
    no_effort_clients: int = 2
    sweep_gamma: tuple[float, ...] = (0.5, 1.0, 1.5, 2.0)
    gamma_clients: tuple[int, ...] = ()
    deviator: int = 0
    deviator_D_prime: int = 60
    compare_D: int = 100
    workers: int = 1
    overrides: dict = field(default_factory=dict)

    def validate(self) -> ExperimentSpec:
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"scenario must be one of {SCENARIOS}, got {self.scenario!r}")
        if self.model not in MODELS:
            raise ConfigError(f"model must be one of {MODELS}, got {self.model!r}")
        if self.data not in SOURCES:
            raise ConfigError(f"data must be one of {SOURCES}, got {self.data!r}")
        if self.data == "mnist_subset" and (self.model != "logistic" or not self.mnist_images or not self.mnist_labels):
            raise ConfigError("mnist_subset needs model = logistic plus mnist_images and mnist_labels")
        if not 0.0 <= self.q <= 1.0:
            raise ConfigError(f"q must lie in [0, 1], got {self.q}")
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        if self.n_clients < 1 or self.samples_per_client < 1 or self.n_test < 1:
            raise ConfigError("n_clients, samples_per_client and n_test must be >= 1")
        if self.feature_dim < 1 or self.num_classes < 1:
            raise ConfigError("feature_dim and num_classes must be >= 1")
        if self.T < 1 or self.H < 1 or self.eta < 0:
            raise ConfigError("need T >= 1, H >= 1 and eta >= 0")
        if self.test_mode not in ("full_mean", "single_sample"):
            raise ConfigError(f"unknown test_mode {self.test_mode!r}")
        if len(self.c_p) not in (1, self.n_clients) or min(self.c_p) <= 0 or self.c_l < 0:
            raise ConfigError("c_p needs one positive value or one per client; c_l must be >= 0")
        if self.l2 <= 0:
            raise ConfigError("l2 must be positive")
        for i in (*self.overrides, *self.gamma_clients, self.deviator):
            if not 0 <= i < self.n_clients:
                raise ConfigError(f"client index {i} out of range 0..{self.n_clients - 1}")
        for i, ov in self.overrides.items():
            if "e" in ov and ov["e"] not in (0, 1):
                raise ConfigError(f"strategy.{i}.e must be 0 or 1")
            if "D" in ov and ov["D"] < 1:
                raise ConfigError(f"strategy.{i}.D must be >= 1")
            if "gamma" in ov and ov["gamma"] < 0:
                raise ConfigError(f"strategy.{i}.gamma must be >= 0")
        if self.scenario == "effort_sweep" and not 0 <= self.no_effort_clients <= self.n_clients:
            raise ConfigError("no_effort_clients must lie in 0..n_clients")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        return self

    def cost_vector(self) -> list[float]:
        return list(self.c_p) * self.n_clients if len(self.c_p) == 1 else list(self.c_p)


_TYPES = {f.name: f.type for f in fields(ExperimentSpec) if f.name != "overrides"}
_OVERRIDE_TYPES = {"e": int, "D": int, "gamma": float}


def _convert(key: str, raw: str):
    kind = _TYPES[key]
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "str":
            return raw
        item = int if "int" in kind else float
        return tuple(item(v) for v in raw.split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None


def parse_spec(text: str, **extra) -> ExperimentSpec:
    """Parse spec text; keyword arguments override parsed keys."""
    values: dict = {}
    overrides: dict[int, dict] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key.startswith("strategy."):
            parts = key.split(".")
            if len(parts) != 3 or parts[2] not in _OVERRIDE_TYPES or not parts[1].isdigit():
                raise ConfigError(f"line {lineno}: bad override key {key!r}")
            try:
                overrides.setdefault(int(parts[1]), {})[parts[2]] = _OVERRIDE_TYPES[parts[2]](raw)
            except ValueError:
                raise ConfigError(f"line {lineno}: bad value for {key}: {raw!r}") from None
            continue
        if key not in _TYPES:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _convert(key, raw)
    spec = ExperimentSpec(**values, overrides=overrides)
    return replace(spec, **extra).validate() if extra else spec.validate()


def load_spec(path: str | Path, **extra) -> ExperimentSpec:
    return parse_spec(Path(path).read_text(encoding="utf-8"), **extra)
