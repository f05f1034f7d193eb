"""Two-layer linearized phonon transport and interface reflectance reconstruction."""

__version__ = "0.1.0"
