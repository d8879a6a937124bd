import contextlib
import logging
import os
import sys

from astropy.logger import AstropyLogger
from astropy.logger import conf as astropy_logger_conf

from mdm_ipa.util.exceptions import MDMWarning

"""This code is based on that provided by SunPy and AstroPy see
    licenses/SUNPY.rst and licenses/ASTROPY.rst
"""

_BOOLEAN_OPTIONS = ["log_warnings", "log_exceptions", "log_to_file"]
_STRING_OPTIONS = ["log_level", "log_file_path", "log_file_level", "log_file_format"]


class MDMLogger(AstropyLogger):
    """
    This class is used to set up logging.

    This inherits the logging enhancements of `~astropy.logger.AstropyLogger`.
    This logger is able to capture and log warnings that are based on
    `~mdm_ipa.util.exceptions.MDMWarning`. Other warnings will be ignored and
    passed on to other loggers (e.g., from Astropy).
    """

    # Override the existing _showwarning() to capture MDMWarning instead of AstropyWarning
    def _showwarning(self, *args, **kwargs):
        # Bail out if we are not catching a warning from mdm_ipa
        if not isinstance(args[0], MDMWarning):
            return self._showwarning_orig(*args, **kwargs)

        warning = args[0]
        # Deliberately not using isinstance here: We want to display
        # the class name only when it's not the default class,
        # MDMWarning. The name of subclasses of MDMWarning should
        # be displayed.
        if type(warning) not in (MDMWarning,):
            message = f"{warning.__class__.__name__}: {args[0]}"
        else:
            message = str(args[0])

        mod_path = args[2]
        # Now that we have the module's path, we look through sys.modules to
        # find the module object and thus the fully-package-specified module
        # name. The module.__file__ is the original source file name.
        mod_name = None
        mod_path, ext = os.path.splitext(mod_path)
        for name, mod in list(sys.modules.items()):
            try:
                path = os.path.splitext(getattr(mod, "__file__", "") or "")[0]
            except Exception:
                continue
            if path == mod_path:
                mod_name = mod.__name__
                break

        if mod_name is not None:
            self.warning(message, extra={"origin": mod_name})
        else:
            self.warning(message)


def _init_log(config=None):
    """
    Initializes the log.

    In most circumstances this is called automatically when importing.
    This code is based on that provided by Astropy see
    "licenses/ASTROPY.rst".

    Parameters
    ----------
    config : configparser.ConfigParser, optional
        If it has a ``[logger]`` section, its options override the
        `~astropy.logger.Conf` defaults while the handlers are set up.
    """
    orig_logger_cls = logging.getLoggerClass()
    logging.setLoggerClass(MDMLogger)
    try:
        log = logging.getLogger("mdm_ipa")
        with contextlib.ExitStack() as stack:
            for option, value in _config_to_logger_options(config).items():
                stack.enter_context(astropy_logger_conf.set_temp(option, value))
            log._set_defaults()
    finally:
        logging.setLoggerClass(orig_logger_cls)

    return log


def _config_to_logger_options(config) -> dict:
    """
    Translates a user-provided config to `~astropy.logger.Conf` option values.
    """
    options = {}
    if config is None or not config.has_section("logger"):
        return options
    for this_option in _BOOLEAN_OPTIONS:
        if config.has_option("logger", this_option):
            options[this_option] = config.getboolean("logger", this_option)
    for this_option in _STRING_OPTIONS:
        if config.has_option("logger", this_option):
            options[this_option] = config.get("logger", this_option)
    return options
