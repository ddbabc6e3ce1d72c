"""Vector equilibrium problems on the real line, their spectral curves and
the multiple orthogonal polynomials of Nikishin systems on the half-line."""

__version__ = "0.1.0"
