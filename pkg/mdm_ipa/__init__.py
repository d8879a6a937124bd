# see license/LICENSE.rst
import os
from pathlib import Path

try:
    from ._version import version as __version__
    from ._version import version_tuple
except ImportError:
    __version__ = "unknown version"
    version_tuple = (0, 0, "unknown version")

from mdm_ipa.util.config import load_config, print_config  # noqa: E402
from mdm_ipa.util.logger import _init_log  # noqa: E402

_package_directory = Path(__file__).parent
_data_directory = _package_directory / "data"

# Load user configuration
config = load_config()

log = _init_log(config=config)

# Then you can be explicit to control what ends up in the namespace,
__all__ = ["config", "print_config", "log"]

# the default discount factor grid
DELTA_START = 0.50
DELTA_END = 1.00
DELTA_STEP = 0.01

# weakly informative prior shared by every candidate parent set
PRIOR_N0 = 0.001
PRIOR_D0 = 0.001
PRIOR_C0_SCALE = 3.0

# exhaustive scoring and cluster separation are only attempted up to this size
MAX_NODES = 14

# environment variable overriding the number of parallel workers
WORKERS_ENV = "MDM_IPA_NUM_WORKERS"


def num_workers() -> int:
    """Return the number of parallel workers to use.

    The environment variable ``MDM_IPA_NUM_WORKERS`` wins over the
    ``[general] workers`` configuration value.
    """
    env_value = os.getenv(WORKERS_ENV)
    if env_value:
        return max(int(env_value), 1)
    return max(config.getint("general", "workers", fallback=1), 1)


log.debug(f"mdm_ipa version: {__version__}")
