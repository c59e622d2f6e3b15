"""Grid-based numerics for the Yamabe problem: constants, operators, spectra, iterations."""

__version__ = "0.1.0"
