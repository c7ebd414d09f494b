"""Extended Hamiltonians: construction, characteristic first integrals and verification."""
__version__ = "0.1.0"
