"""
Model monitors and model embellishments.
"""
