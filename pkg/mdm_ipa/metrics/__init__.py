"""
Structure recovery and group-level evaluation metrics.
"""
