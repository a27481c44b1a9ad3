"""CPU inference engine, evaluation harness and benchmark runner for
lightweight mobile video super-resolution networks."""

__version__ = "0.1.0"
