import logging
import os
from pathlib import Path
from typing import Any, Dict, Union

import pandas as pd
import yaml

logger = logging.getLogger(__name__)

DEFAULT_CONFIG_FILE = "config/config.yaml"


def save_to_csv(df: pd.DataFrame, path: Union[str, Path]) -> None:
    """
    Write a DataFrame to CSV, creating the parent directory when needed.

    Args:
        df (pd.DataFrame): Table to write.
        path (Union[str, Path]): Destination file.

    Raises:
        OSError: The file could not be written.
    """
    try:
        directory = os.path.dirname(str(path))
        if directory:
            os.makedirs(directory, exist_ok=True)

        # Fixed line terminator and float format keep the bytes stable across platforms
        df.to_csv(path, index=False, lineterminator="\n", float_format="%.10g")
        logger.info(f"Data successfully saved to {path}")
    except OSError as e:
        logger.error(f"Failed to save data to {path}: {e}")
        raise


def load_config(filename: Union[str, Path] = DEFAULT_CONFIG_FILE) -> Dict[str, Any]:
    """Load application settings from a YAML file; a missing file gives {}."""
    path = Path(filename)
    if not path.is_file():
        logger.debug(f"No settings file at '{path}', using defaults.")
        return {}

    with open(path, "r", encoding="utf-8") as file:
        config = yaml.safe_load(file) or {}

    if not isinstance(config, dict):
        logger.warning(f"Settings file '{path}' is not a mapping; ignoring it.")
        return {}
    return config


def get_setting(config: Dict[str, Any], dotted_key: str, default: Any = None) -> Any:
    """
    Look up a nested setting such as "harness.workers".

    Args:
        config (Dict[str, Any]): Mapping returned by load_config.
        dotted_key (str): Dot-separated path into the mapping.
        default (Any, optional): Returned when any level is missing.

    Returns:
        Any: The setting, or the default.
    """
    node: Any = config
    for part in dotted_key.split("."):
        if not isinstance(node, dict) or part not in node:
            return default
        node = node[part]
    return node
