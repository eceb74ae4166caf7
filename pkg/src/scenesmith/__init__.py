"""Build simulation-ready scene bundles from a DSM, VNIR imagery, a spectral
library and vector road data."""

__version__ = "0.1.0"
