"""Monte Carlo scene search over object and layout proposals."""

__version__ = "0.1.0"
