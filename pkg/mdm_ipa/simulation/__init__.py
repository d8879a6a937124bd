"""
Synthetic data from multiregression dynamic models.
"""
