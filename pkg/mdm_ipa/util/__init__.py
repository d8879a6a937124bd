"""General utilities: logging, configuration, errors and validation."""
