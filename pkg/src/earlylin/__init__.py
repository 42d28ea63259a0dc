"""Two-layer networks, their tangent kernels, and the early-time linear
models that track them."""

__version__ = "0.1.0"
