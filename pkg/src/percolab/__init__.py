"""percolab: a desk-scale laboratory for critical-percolation connectivity.

Core layers: percolation configurations on finite graphs (`lattice`),
pivotal-edge machinery (`pivotals`), connectivity trees (`conntree`),
leaf-labeled binary tree combinatorics (`trees`), lattice diagram valuations
(`diagrams`), continuum tree integrals (`integrals`), exact enumeration
oracles (`oracle`) and Monte Carlo estimators (`estimation`).  A FastAPI
service (`percolab.service`) wraps the operations; the CLI (`percolab.cli`)
is a thin client of that service.
"""

__version__ = "0.1.0"
