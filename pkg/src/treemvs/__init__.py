"""Dirichlet problems for coupled mean-value systems on m-regular trees."""
__version__ = "0.1.0"
