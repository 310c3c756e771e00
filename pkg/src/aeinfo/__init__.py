"""Information-plane analysis of autoencoders with a matrix-based Renyi entropy estimator."""
__version__ = "0.1.0"
