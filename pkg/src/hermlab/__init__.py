"""hermlab: a desk-scale numerical laboratory for the holomorphic-Laplacian
map system and its heat flow on model Hermitian manifolds."""

__version__ = "0.1.0"
