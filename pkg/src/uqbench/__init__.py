"""Calibration and uncertainty evaluation for classifier and regressor outputs."""
