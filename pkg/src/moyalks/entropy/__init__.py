from .lyapunov import LyapunovEstimate, lyapunov_exponent, pesin_gap
from .partition import (Box, Disk, DyadicPartition, FinitePartition, PartitionFamily, SamplingPlan,
                        coarsest_refinement, entropy_bits, partition_entropy)
from .rates import (EntropyReport, RateEstimate, count_entropy, entropy_rate, join_entropies, ks_entropy,
                    rate_from_entropies)
from .systems import (PointMapSystem, baker_map, cat_map, from_flow, harmonic_time_one,
                      measure_preservation_residual, rotation, standard_map)

__all__ = [
    "Box", "Disk", "DyadicPartition", "FinitePartition", "PartitionFamily", "SamplingPlan",
    "coarsest_refinement", "entropy_bits", "partition_entropy", "EntropyReport", "RateEstimate",
    "count_entropy", "entropy_rate", "join_entropies", "ks_entropy", "rate_from_entropies",
    "PointMapSystem", "baker_map", "cat_map", "from_flow", "harmonic_time_one",
    "measure_preservation_residual", "rotation", "standard_map", "LyapunovEstimate",
    "lyapunov_exponent", "pesin_gap",
]
