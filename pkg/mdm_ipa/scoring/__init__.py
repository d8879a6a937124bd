"""
Local scores of node / parent-set pairs.
"""
