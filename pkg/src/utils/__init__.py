"""
Shared utilities: the event registry and exception hierarchy, typed
config sections, tensor archives, result tables and traces, plots and
pre-flight validation.

Submodules are imported directly (``from src.utils.errors import ...``);
``pre_flight_checks`` depends on the numerical subpackages and is kept
out of this package namespace.
"""
