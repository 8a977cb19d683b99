"""Quantitative fixed-point toolkit.

Halpern iteration and Browder/Reich resolvents for nonexpansive
operators in Hilbert and l_p spaces, exact-rational convergence-rate
calculators (asymptotic regularity, metastability, resolvent
metastability), a counterfunction algebra, and brute-force empirical
verification of every bound.
"""

__version__ = "0.1.0"
