"""Stress-aware staff scheduling: performance curves, emotion assessment,
queue simulation and a memetic schedule optimizer."""

__version__ = "0.1.0"
