"""Small-strain incompressible limits of finite elasticity, numerically.

Submodules:

- :mod:`incompressa.materials` -- stored-energy densities and their linearization
- :mod:`incompressa.fields` -- grid fields, difference operators, quadrature norms
- :mod:`incompressa.flow_recovery` -- volume-preserving maps from div-free velocities
- :mod:`incompressa.potentials` -- Helmholtz split and vector potentials
- :mod:`incompressa.solvers` -- linearized saddle solver and nonlinear minimization
- :mod:`incompressa.harness` -- configurable experiments and the ``incompressa`` CLI
"""

from . import fields, flow_recovery, materials, potentials, solvers

__version__ = "0.1.0"

__all__ = ["fields", "flow_recovery", "materials", "potentials", "solvers", "__version__"]
