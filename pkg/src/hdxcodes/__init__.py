"""Direct product codes over subspace systems and KMS coset complexes."""

__version__ = "0.1.0"
