"""Mixed finite elements and parameter-robust preconditioners for poroelasticity."""

__version__ = "0.1.0"
