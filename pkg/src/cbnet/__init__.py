"""Channel-bonding WLAN simulator, dataset pipeline and throughput predictors."""

__version__ = "0.1.0"
