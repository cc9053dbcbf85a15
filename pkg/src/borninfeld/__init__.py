"""Born-Infeld electrostatics: constrained energy minimization, exact radial
solutions and numerical checks of the associated a-priori estimates."""

__version__ = "0.1.0"
