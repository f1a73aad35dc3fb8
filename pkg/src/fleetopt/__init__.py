"""Fleet-size optimisation with a simulator, a neural-network surrogate and a filtered GA."""

__version__ = "0.1.0"
