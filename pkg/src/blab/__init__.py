"""Planar billiards: collision map, period-3 orbits and fractal estimators for orbit sets."""
from .boundary import BoundaryCurve, build_curve, circle, ellipse, fourier
from .dynamics import PhasePoint, differential, iterate, measure_defect, shoot, trace
from .errors import (BilliardError, DataError, DegenerateTriangle, GrazingIntersection,
                     InvalidDescriptor, NoIntersection, NonPositiveRadius, NonSmooth,
                     NotAccumulationPoint, NotAsymptotic, NumericalFailure, OutOfRange,
                     SelfIntersecting, StepUnderflow, TooFewPoints)
from .fractal import (DimensionEstimate, PointCloud, TangentReport, angular_density,
                      asymptotic_ray, box_dimension, density, derivative_along,
                      hausdorff_premeasure, tangent_test)
from .orbits import (OrbitTriple, dt3_defect, extended_length, fermat_defect, find_period3,
                     perimeter, perimeter_gradient, sample_p3, wojtkowski_residual)

__version__ = "0.1.0"
