"""Two-time spectral closures (DIA, LET, VLET, RGET) for isotropic turbulence."""

__version__ = "0.1.0"
