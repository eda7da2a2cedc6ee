"""Composite optimization ``min_{x in X} h(G(x))`` with piecewise linear-quadratic ``h``."""
