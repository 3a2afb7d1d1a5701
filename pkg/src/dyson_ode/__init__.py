"""Classical reference implementation of the Dyson-series linear-system method
for time-dependent linear ODEs, with bound checks and resource estimates."""

__version__ = "0.1.0"
