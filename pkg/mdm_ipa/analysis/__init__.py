"""
Simulation studies built from the scoring, search and evaluation tools.
"""
