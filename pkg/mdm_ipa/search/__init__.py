"""
Optimal DAG search over a table of local scores.
"""
