import copy
import json
import os

from .errors import ConfigError, MissingFileError
from .utils import AttributedDict


def read_json(path: str):
    """
    Load a JSON file and turn I/O and parse failures into `ConfigError`s that name the file and position.
    """
    if not os.path.exists(path):
        raise MissingFileError(path)
    with open(path, encoding="utf-8") as f:
        text = f.read()
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}:{e.lineno}:{e.colno}: {e.msg}", path=path, line=e.lineno) from e


class Config(AttributedDict):
    """
    Configuration of systems, controls, costs and solve requests, stored as JSON.

    Nested dicts, and dicts inside lists (edges, constraints), are converted to typed configs on construction.
    """

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        for key, value in self.items():
            if isinstance(value, dict) and not isinstance(value, Config):
                self[key] = init_config(value)
            elif isinstance(value, list) and len(value) > 0:
                self[key] = [
                    init_config(item) if isinstance(item, dict) and not isinstance(item, Config) else item
                    for item in value
                ]

    def save(self, path: str):
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self, f, indent=2, sort_keys=True)

    @classmethod
    def load(cls, path: str):
        return cls(read_json(path))

    def deepcopy(self):
        # subclasses copy into their own class
        return self.__class__(copy.deepcopy(dict(self)))


class Configurable:
    """Configurable is an interface for classes that can be initialized with a config."""

    def __init__(self, **kwargs):
        self._config_dict = kwargs

    @classmethod
    def from_config(cls, config: Config):
        return cls(**config)

    def to_config(self) -> Config:
        return Config(**self._config_dict)

    def save_config(self, path: str):
        self.to_config().save(path)


class _RequiredKeysConfig(Config):
    required = ()
    label = "config"

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        for key in self.required:
            if key not in self:
                raise ConfigError(f"The {key} field is not specified in the {self.label}")


class SystemConfig(_RequiredKeysConfig):
    """SystemConfig describes a LevelSystem: level count, energies and coupling edges (1-based)."""

    required = ("n", "energies", "edges")
    label = "system config"

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        if not isinstance(self["edges"], list):
            raise ConfigError("The edges field must be a list")
        for edge in self["edges"]:
            if not isinstance(edge, dict) or "j" not in edge or "k" not in edge:
                raise ConfigError(f"Every edge needs j and k fields, got {edge!r}")


class ControlConfig(_RequiredKeysConfig):
    """ControlConfig holds a gridded control: T, N, flavor (V, H or U) and per-edge values."""

    required = ("T", "N", "flavor", "values")
    label = "control config"

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        if self["flavor"] not in ("V", "H", "U"):
            raise ConfigError(f"Unknown control flavor: {self['flavor']}")


class CostConfig(_RequiredKeysConfig):
    """CostConfig contains a kind field naming the cost functional."""

    required = ("kind",)
    label = "cost config"


class SolveConfig(_RequiredKeysConfig):
    """SolveConfig contains the source and target boundary specs plus optional solver settings."""

    required = ("source", "target")
    label = "solve request"


class BoundaryConfig(_RequiredKeysConfig):
    required = ("kind",)
    label = "boundary spec"


# Initialize with different config class depending on which keys identify the config
def init_config(config: dict):
    if not isinstance(config, dict):
        raise ConfigError("The config must be a dict")

    if "energies" in config:
        return SystemConfig(config)
    elif "flavor" in config:
        return ControlConfig(config)
    elif "source" in config and "target" in config:
        return SolveConfig(config)
    elif "kind" in config and ("index" in config or "moduli" in config or "constraints" in config):
        return BoundaryConfig(config)
    elif "kind" in config:
        return CostConfig(config)
    else:
        return Config(config)
