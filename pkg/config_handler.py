# Copyright 2021 Charles Goldstraw
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
# implied. See the License for the specific language governing
# permissions and limitations under the License.

"""Handles reading and validating fields in the config and sweep files."""
import json
import logging
import math
from typing import Any

CONFIG_FILE = "config.json"

EXPECTED_TYPES = {
    "log_file": str,
    "log_level": str,
    "budgets": list,
    "c_grid": list,
    "rl_grid": list,
    "default_c": (int, float),
    "default_rl": int,
    "mixmax_q": (int, float),
    "repetitions": int,
    "master_seed": int,
    "workers": int,
    "significance_level": (int, float),
    "recommendation": str,
    "pb_max_depth": int,
    "record_wall_time": bool
}

DEFAULT_VALUES = {
    "log_file": "sys.log",
    "log_level": "INFO",
    "budgets": [250, 500, 1000, 10000],
    "c_grid": [0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0],
    "rl_grid": [5, 10, 25, 50],
    "default_c": 1 / math.sqrt(2),
    "default_rl": 10,
    "mixmax_q": 0.25,
    "repetitions": 40,
    "master_seed": 0,
    "workers": 1,
    "significance_level": 0.01,
    "recommendation": "max-visits",
    "pb_max_depth": 4,
    "record_wall_time": True
}

# Sweep keys and the config field supplying each one's default.
SWEEP_FIELDS = {
    "games": (list, None),
    "budgets": (list, "budgets"),
    "agents": (list, None),
    "c_values": (list, "c_grid"),
    "rl_values": (list, "rl_grid"),
    "q": ((int, float), "mixmax_q"),
    "repetitions": (int, "repetitions"),
    "seed": (int, "master_seed")
}


class ConfigError(ValueError):
    """Raised for unknown games or agents and malformed run settings."""


def _type_name(expected: Any) -> str:
    if isinstance(expected, tuple):
        return " or ".join(kind.__name__ for kind in expected)
    return expected.__name__


def _matches(value: Any, expected: Any) -> bool:
    # bool is an int subclass, so it must not pass for numeric fields.
    if isinstance(value, bool) and expected is not bool:
        return False
    return isinstance(value, expected)


def validate_field(field: str, value: Any) -> Any:
    """Type checks a given config field.

    Compare a field value's type with the expected type for that field.
    Return the value if the type matches, otherwise return the default
    value for that field.

    Args:
        field: The name of the field.
        value: The value stored in that field.

    Returns:
        Either the value of the field or the default value of the
        field, depending on whether the value is of the expected type.

    Raises:
        ConfigError: If the field is not a known config field.
    """
    if field not in EXPECTED_TYPES:
        raise ConfigError(f"Unknown config field '{field}'")

    if _matches(value, EXPECTED_TYPES[field]):
        return value

    type_error_log = "Config field '%s' invalid type. %s should be: %s"
    actual = type(value).__name__
    expected = _type_name(EXPECTED_TYPES[field])
    logging.warning(type_error_log, field, actual, expected)

    default_value = DEFAULT_VALUES[field]
    replace_log = "Invalid config value '%s' replaced with '%s'"
    logging.warning(replace_log, value, default_value)
    return default_value


def load_config(path: str = CONFIG_FILE) -> dict[str, Any]:
    """Loads the raw config file, falling back to an empty config."""
    try:
        with open(path, "r", encoding="UTF-8") as config_file:
            return json.load(config_file)
    except FileNotFoundError:
        logging.warning("Config file '%s' not found, using defaults.", path)
        return {}


def read_config(*fields: str, path: str = CONFIG_FILE) -> list[Any]:
    r"""Reads the config file for given fields.

    Open the config file and return the data in the fields specified in
    the arguments. Missing fields take their default value.

    Args:
        *fields: Variable number of fields to return from the config.
        path: The config file to read, config.json by default.

    Returns:
        A list containing the data inside the fields specified by
        the fields argument, in the order that the fields were
        given in. Fields with the wrong type are replaced by their
        default values.
    """
    config = load_config(path)
    return [
        validate_field(field, config.get(field, DEFAULT_VALUES.get(field)))
        for field in fields]


def read_sweep(path: str, config_path: str = CONFIG_FILE) -> dict[str, Any]:
    """Reads a sweep grid definition.

    Keys left out of the sweep file take their defaults from the config
    file. Unlike the config file, a sweep key with the wrong type is an
    error rather than being replaced.

    Args:
        path: The JSON sweep file.
        config_path: The config file supplying the defaults.

    Returns:
        A dictionary with every sweep key filled in.

    Raises:
        ConfigError: If the file holds unknown keys, values of the
        wrong type, or leaves out the games or agents.
    """
    with open(path, "r", encoding="UTF-8") as sweep_file:
        sweep = json.load(sweep_file)
    if not isinstance(sweep, dict):
        raise ConfigError("A sweep file must hold a JSON object")

    unknown = set(sweep) - set(SWEEP_FIELDS)
    if unknown:
        raise ConfigError(f"Unknown sweep keys: {', '.join(sorted(unknown))}")

    grid = {}
    for key, (expected, config_field) in SWEEP_FIELDS.items():
        if key in sweep:
            if not _matches(sweep[key], expected):
                raise ConfigError(
                    f"Sweep key '{key}' should be: {_type_name(expected)}")
            grid[key] = sweep[key]
        elif config_field is None:
            raise ConfigError(f"Sweep key '{key}' is required")
        else:
            grid[key] = read_config(config_field, path=config_path)[0]
    logging.info("Sweep grid read from %s.", path)
    return grid
