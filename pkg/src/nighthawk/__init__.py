"""Event-triggered Bayesian control of onboard light intensity and exposure time."""

__version__ = "0.1.0"
