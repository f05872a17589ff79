"""Computer-assisted proofs of symmetric homoclinic orbits of u'''' + beta u'' + exp(u) - 1 = 0."""

__version__ = "0.1.0"
