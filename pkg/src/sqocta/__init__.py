"""sqocta: equilibrium and out-of-equilibrium simulation of the frustrated
square-octagonal spin-chain Ising lattice.

Modules:
  lattice       lattice construction and validation
  model         Hamiltonian parameters, schedules, effective mapping
  classical_mc  Metropolis sampler for the classical (Gamma = 0) limit
  pimc          path-integral Monte Carlo for Gamma > 0
  ed            exact diagonalization and ground-manifold enumeration
  observables   order parameters, susceptibility, local entropy, state maps
  protocols     experiment drivers (equilibrium, hysteresis, phase diagram)
  records       record persistence and provenance
  cli           command-line interface
"""

__version__ = "0.1.0"
