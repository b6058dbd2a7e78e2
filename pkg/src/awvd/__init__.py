"""Approximate multiplicatively weighted Voronoi diagrams on cube grids."""

from .cover import (
    ConeGrid,
    CoverSet,
    PairDecomposition,
    build_covers,
    build_sspd,
    cover_spotcheck,
    scan_cone_sites,
    validate_sspd,
)
from .cubes import (
    CanonicalCube,
    CompressedQuadTree,
    GridConfig,
    build_compressed_tree,
    propagate_labels,
    z_compare,
)
from .diagram import AMWVD, build_diagram, dump_diagram, load_diagram
from .geometry import (
    ApolloniusBall,
    ApproxParams,
    Site,
    SiteSet,
    build_params,
    derive_params,
    effective_weight,
    make_ball,
    min_enclosing_ball_approx,
    same_ray_dominates,
    weighted_distance,
)
from .oracle import Instance, brute_nn, brute_refinement_oracle, gen_instance, ratio_check
from .refine import (
    BOUNDARY,
    BallIntersection,
    INSIDE,
    OUTSIDE,
    axis_projection,
    classify_cube,
    fatness_radii,
    refine_region,
    zoom_in,
)

__version__ = "0.1.0"
