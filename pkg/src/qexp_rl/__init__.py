"""q-exponential family policies, exact samplers, analytic gradients, and
actor-critic agents for desk-scale classic-control experiments."""

__version__ = "0.1.0"
