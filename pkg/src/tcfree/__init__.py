"""Certified collision-free polytopic regions in tangent configuration space.

The library certifies, via weighted sums-of-squares programs solved as
semidefinite programs, that every configuration inside a polytope of the
tangent configuration space keeps all collision-body pairs separated, and
grows such polytopes by alternating certification with convex inflation.
"""

from .bundle import RegionBundle, verify_bundle
from .certifier import (CertificationReport, CertifyOptions, CollisionPair,
                        PlaneCertificate, RefutationCertificate,
                        certify_pair_plane, certify_pair_refutation,
                        certify_polytope, enumerate_pairs,
                        evaluate_certificate)
from .geometry import (Capsule, Cylinder, Sphere, VPolytope, box_vertices,
                       fixed_intersection_point, fixed_separating_plane,
                       membership_conditions, plane_side_conditions)
from .kinematics import (Joint, KinematicChain, RationalPose, RigidTransform,
                         expand_composite_joint, inverse_stereographic,
                         stereographic)
from .pipeline import (PipelineOptions, PipelineResult, coverage_fraction,
                       rasterize_tcspace, run_pipeline)
from .polyalg import (Monomial, Polynomial, RationalFn,
                      coordinate_degree_basis, newton_basis_check,
                      product_basis)
from .polytope import Ellipsoid, TcPolytope, regular_octagon
from .regions import (bilinear_alternation, contract_to_feasible,
                      grow_polytope, max_inscribed_ellipsoid)
from .scenefile import Scene, SceneError, load_bundled_scene, parse_scene
from .seeding import (CollisionWitness, SeedingOptions, find_closest_collision,
                      nonlinear_iris, tangent_hyperplane)
from .soscomp import SolveResult, SosProgram

__version__ = "0.1.0"
