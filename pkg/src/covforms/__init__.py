"""Bundle-valued discrete exterior calculus on flat tori and the masked
variational functional whose critical points carry degree-k structures."""

__version__ = "0.1.0"
