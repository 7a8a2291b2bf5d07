"""
entac - Tabular entropy-regularized actor-critic with exact planning and numerical checks of its bounds.
"""
