from .observable import Observable, exact
from .poisson import PointMap, VectorField, hamiltonian_vector_field, poisson_bracket, symplectic_check
from .space import MeasureDescriptor, PhaseSpace, liouville_measure

__all__ = [
    "Observable", "exact", "PhaseSpace", "MeasureDescriptor", "liouville_measure",
    "poisson_bracket", "hamiltonian_vector_field", "VectorField", "PointMap", "symplectic_check",
]
