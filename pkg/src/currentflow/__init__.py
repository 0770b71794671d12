"""Transport of currents along flows of Lipschitz vector fields.

Submodules: ``exterior`` (k-vectors and norms), ``forms`` (test forms),
``flow`` (vector fields and flow maps), ``currents`` (polyhedral and
atomic currents), ``transport`` (families, residuals and space-time
currents), ``continuity`` (the measure case) and ``cli``.

The package root deliberately imports nothing heavy so that the command
line entry point can cap thread pools before numpy loads.
"""

__version__ = "0.1.0"

__all__ = ["exterior", "forms", "quadrature", "flow", "currents", "transport", "continuity", "io", "suites", "cli"]
