"""Active learning of Mealy reward machines in MDPs, with a built-in model checker."""

__version__ = "0.1.0"
