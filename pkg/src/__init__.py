"""LTV Commutativity Lab - feedback conjugates, cascade simulation and commutativity checks."""

__version__ = "0.1.0"
