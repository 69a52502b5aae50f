"""Fully parked trees from positive catalytic equations.

A positive polynomial equation with one catalytic variable,

    F(x, y) = x * Q(y, F, D^1 F, ..., D^K F),

is read as the generating function of plane trees decorated with cars and
parking spots, counted by vertices (x) and outgoing flux (y).  The package
solves the equation exactly and numerically, extracts the critical point
and the universal exponents alpha and beta, builds the limiting step law of
the locally largest branch, and verifies the random-walk representation of
that branch together with the continuum root equations that pin beta to
{3/2, 5/2}.
"""

from parkflux.model import (
    CatalyticPolynomial,
    WeightFunction,
    bundled_model_names,
    load_model,
    planar_map_model,
    unit_spot_model,
)
from parkflux.series import Series
from parkflux.solver import (
    NumericEvaluation,
    PartitionSolution,
    compute_coefficients,
    compute_pointed,
    evaluate,
)
from parkflux.trees import (
    DecoRepro,
    Tree,
    enumerate_fpt,
    locally_largest,
    park,
    sample_tree,
)
from parkflux.measure import (
    NuHatSampler,
    OffspringTable,
    StepMeasure,
    critical_tilt,
    drift_diagnostic,
    nu,
    sample_volumes,
)
from parkflux.asymptotics import (
    FitResult,
    estimate_x_cr,
    estimate_y_cr,
    fit_alpha,
    fit_beta,
)
from parkflux.walk import (
    key_formula_exact,
    key_formula_mc,
    ladder_tails_mc,
    pointed_key_check,
    renewal,
    sandwich_check,
)
from parkflux.lamperti import (
    find_root,
    lk_closed_form_check,
    psi_compensated,
    psi_subordinator,
    tilt_proportionality,
)

__version__ = "0.1.0"
