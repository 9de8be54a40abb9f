"""JSON run configuration shared by the command-line entry points."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from typing import Any

from . import __version__
from .channel import ChannelParams, LinkParams
from .errors import ConfigError
from .multihop import HopTopology
from .outage import HarqConfig, Scheme
from .specfun import AbateWhittConfig, ContourConfig

SWEEP_VARIABLES = ("snr", "rate", "epsilon")


@dataclass(frozen=True)
class Sweep:
    variable: str = "snr"
    start: float = 0.0
    stop: float = 40.0
    points: int = 9

    def __post_init__(self):
        if self.variable not in SWEEP_VARIABLES:
            raise ConfigError(f"sweep variable must be one of {SWEEP_VARIABLES}")
        if int(self.points) != self.points or self.points < 2:
            raise ConfigError("sweep needs at least 2 points")
        if not self.start < self.stop:
            raise ConfigError("sweep requires from < to")

    def values(self):
        step = (self.stop - self.start) / (self.points - 1)
        return [self.start + i * step for i in range(self.points)]


@dataclass(frozen=True)
class RunConfig:
    link: LinkParams = field(default_factory=LinkParams)
    channel: ChannelParams = field(default_factory=ChannelParams)
    harq: HarqConfig = field(default_factory=HarqConfig)
    topology: HopTopology | None = None
    sweep: Sweep = field(default_factory=Sweep)
    output_path: str | None = None
    seed: int = 0
    trials: int = 100_000
    schemes: tuple = ("IR", "CC", "TypeI")
    workers: int = 1
    contour: ContourConfig = field(default_factory=ContourConfig)
    abate_whitt: AbateWhittConfig = field(default_factory=AbateWhittConfig)
    dataset: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    optimize: dict = field(default_factory=dict)

    def __post_init__(self):
        if int(self.trials) != self.trials or self.trials < 1:
            raise ConfigError("trials must be a positive integer")
        if int(self.workers) != self.workers or self.workers < 1:
            raise ConfigError("workers must be a positive integer")
        object.__setattr__(self, "schemes", tuple(Scheme(s).value for s in self.schemes))

    def to_dict(self) -> dict:
        return {
            "link": self.link.to_dict(),
            "channel": self.channel.to_dict(),
            "harq": self.harq.to_dict(),
            "topology": None if self.topology is None else self.topology.to_dict(),
            "sweep": {"variable": self.sweep.variable, "from": self.sweep.start,
                      "to": self.sweep.stop, "points": self.sweep.points},
            "output_path": self.output_path,
            "seed": self.seed,
            "trials": self.trials,
            "schemes": list(self.schemes),
            "workers": self.workers,
            "contour": dataclasses.asdict(self.contour),
            "abate_whitt": dataclasses.asdict(self.abate_whitt),
            "dataset": dict(self.dataset),
            "train": dict(self.train),
            "optimize": dict(self.optimize),
        }

    def digest(self) -> str:
        """Hash of the canonical JSON form; worker count does not affect results."""
        d = self.to_dict()
        d.pop("workers")
        d.pop("output_path")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def metadata_line(self, command: str) -> str:
        return f"thzharq {__version__} command={command} config_sha256={self.digest()} seed={self.seed}"


def _build(cls, d, name):
    if d is None:
        return cls()
    if not isinstance(d, dict):
        raise ConfigError(f"section '{name}' must be an object")
    known = {f.name for f in dataclasses.fields(cls)}
    extra = set(d) - known
    if extra:
        raise ConfigError(f"unknown keys in '{name}': {sorted(extra)}")
    try:
        return cls(**d)
    except TypeError as exc:
        raise ConfigError(f"bad section '{name}': {exc}") from exc


TOP_KEYS = {
    "link", "channel", "harq", "topology", "sweep", "output_path", "seed", "trials",
    "schemes", "workers", "contour", "abate_whitt", "dataset", "train", "optimize",
}


def config_from_dict(d: dict[str, Any]) -> RunConfig:
    if not isinstance(d, dict):
        raise ConfigError("configuration must be a JSON object")
    extra = set(d) - TOP_KEYS
    if extra:
        raise ConfigError(f"unknown top-level keys: {sorted(extra)}")
    harq = dict(d.get("harq") or {})
    if harq.get("power_factors") is not None:
        harq["power_factors"] = tuple(harq["power_factors"])
    sweep = dict(d.get("sweep") or {})
    sweep_kw = {"variable": sweep.pop("variable", "snr"), "start": sweep.pop("from", 0.0),
                "stop": sweep.pop("to", 40.0), "points": sweep.pop("points", 9)}
    if sweep:
        raise ConfigError(f"unknown keys in 'sweep': {sorted(sweep)}")
    topo = d.get("topology")
    if topo is not None:
        if not isinstance(topo, dict):
            raise ConfigError("section 'topology' must be an object")
        topo = dict(topo)
        if "distances_m" not in topo and "hops" in topo:
            # equal split of the link distance
            link_d = (d.get("link") or {}).get("distance_m", LinkParams().distance_m)
            topo["distances_m"] = [link_d / topo["hops"]] * int(topo["hops"])
        try:
            topo = HopTopology.from_dict(topo)
        except TypeError as exc:
            raise ConfigError(f"bad section 'topology': {exc}") from exc
    kw = {k: d[k] for k in ("output_path", "seed", "trials", "workers") if k in d}
    if "schemes" in d:
        kw["schemes"] = tuple(d["schemes"])
    for key in ("dataset", "train", "optimize"):
        if key in d:
            if not isinstance(d[key], dict):
                raise ConfigError(f"section '{key}' must be an object")
            kw[key] = dict(d[key])
    try:
        return RunConfig(
            link=_build(LinkParams, d.get("link"), "link"),
            channel=_build(ChannelParams, d.get("channel"), "channel"),
            harq=_build(HarqConfig, harq, "harq"),
            topology=topo,
            sweep=Sweep(**sweep_kw),
            contour=_build(ContourConfig, d.get("contour"), "contour"),
            abate_whitt=_build(AbateWhittConfig, d.get("abate_whitt"), "abate_whitt"),
            **kw,
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def load_config(path: str | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return config_from_dict(data)


def with_overrides(cfg: RunConfig, seed=None, trials=None, out=None) -> RunConfig:
    kw = {}
    if seed is not None:
        kw["seed"] = int(seed)
    if trials is not None:
        kw["trials"] = int(trials)
    if out is not None:
        kw["output_path"] = out
    return dataclasses.replace(cfg, **kw) if kw else cfg
