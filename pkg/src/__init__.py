# Conditional Stochastic Dominance Test Package

__version__ = "1.0.0"
