import os
from pathlib import Path
from typing import Any, Dict

import yaml
from dotenv import load_dotenv

load_dotenv()

_DEFAULT_CONFIG_DIR = Path(__file__).resolve().parent.parent / "config"


class ConfigLoader:
    _configs: Dict[str, Dict[str, Any]] = {}

    @classmethod
    def config_dir(cls) -> Path:
        return Path(os.getenv("RISKMARKET_CONFIG_DIR", str(_DEFAULT_CONFIG_DIR)))

    @classmethod
    def load_config(cls, config_name: str = "market") -> Dict[str, Any]:
        """
        Loads a YAML file from the config/ directory.
        Each configuration is cached by name so repeated calls do not touch the disk.
        """
        if config_name not in cls._configs:
            config_path = cls.config_dir() / f"{config_name}.yaml"
            with open(config_path, "r") as file:
                cls._configs[config_name] = yaml.safe_load(file) or {}

        return cls._configs[config_name]

    @classmethod
    def get_config_value(cls, key: str, default: Any = None, config_name: str = "market") -> Any:
        """
        Retrieve one top-level value from a configuration, loading it on first use.
        """
        return cls.load_config(config_name).get(key, default)
