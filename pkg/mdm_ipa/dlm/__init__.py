"""Dynamic linear regression filtering, smoothing and forecasting."""
