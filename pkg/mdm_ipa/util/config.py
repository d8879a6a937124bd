"""
Provides the package configuration.

The default ``configrc`` shipped in the package data directory is read first,
then a user ``configrc`` found in the astropy configuration directory for
``mdm_ipa``, then the file named by the ``MDM_IPA_CONFIG`` environment
variable. Later files override earlier ones.
"""

import configparser
import os
from pathlib import Path

from astropy.config import get_config_dir

__all__ = ["load_config", "print_config", "get_config_files", "CONFIG_ENV"]

CONFIG_ENV = "MDM_IPA_CONFIG"

_default_configrc = Path(__file__).parent.parent / "data" / "configrc"


def get_config_files() -> list:
    """Return the configuration files that exist, in the order they are read.

    Returns
    -------
    files : list of Path
    """
    candidates = [_default_configrc]
    try:
        candidates.append(Path(get_config_dir("mdm_ipa")) / "configrc")
    except OSError:
        # no writable home directory, only the packaged defaults apply
        pass
    env_path = os.getenv(CONFIG_ENV)
    if env_path:
        candidates.append(Path(env_path))
    return [this_file for this_file in candidates if this_file.is_file()]


def load_config(extra_file: Path = None) -> configparser.ConfigParser:
    """Read the configuration files and return the parsed configuration.

    Parameters
    ----------
    extra_file : Path, optional
        A further INI file read last, e.g. the ``--config`` file of the
        command line.

    Returns
    -------
    config : configparser.ConfigParser
    """
    config = configparser.ConfigParser(interpolation=None)
    files = get_config_files()
    if extra_file is not None:
        extra_file = Path(extra_file)
        if not extra_file.is_file():
            raise FileNotFoundError(f"Configuration file {extra_file} not found.")
        files.append(extra_file)
    config.read(files)
    config.read_files = files
    return config


def print_config(config: configparser.ConfigParser = None):
    """Print the files read and the current configuration values."""
    if config is None:
        import mdm_ipa

        config = mdm_ipa.config
    print("FILES READ:")
    for this_file in getattr(config, "read_files", []):
        print(f"  {this_file}")
    print("CONFIGURATION:")
    for section in config.sections():
        print(f"  [{section}]")
        for option, value in config.items(section):
            print(f"  {option} = {value}")
        print("")
