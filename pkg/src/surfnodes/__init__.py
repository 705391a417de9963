"""Variable-density node placement on parametric curves and surfaces.

The advancing-front generator (``generate_proposed``) grows a node set from a
seed by stepping along randomly rotated parametric directions and accepting
candidates whose ambient distance to every existing node is at least the
local spacing.  Supersampling-with-decimation and naive parametric-lattice
generators are included as baselines, together with quality metrics and
numerical error bounds.
"""
__version__ = "0.1.0"

from .directions import RNG_ID, DirectionPattern, SplitMix64, base_pattern, default_count
from .geometry import (EARTH_H_MAX, EARTH_H_MIN, GALLERY_NAMES, AltitudeGrid, ParamDomain,
                       SpacingField, Surface, as_spacing, callable_spacing, constant_spacing,
                       gallery, hessian_check, jacobian_check, load_altitude_spacing)
from .nodegen import (GenerationConfig, NodeSet, SeedError, SingularDirectionError,
                      generate_naive, generate_proposed, generate_supersampled, propose_candidate,
                      run_algorithm, supersampling_factor)
from .quality import (BoundReport, NNStats, UniformityReport, bound_conformance, max_empty_sphere,
                      min_pairwise_distance, nn_stats, random_pairs, separation_distance,
                      spacing_error_bounds, uniformity)
from .spatial import GridIndex, KDTreeIndex
