"""Near-optimal streaming factorizations of the prefix-sum matrix.

Factor the all-ones lower-triangular matrix as A = B C with both factors
lower-triangular Toeplitz operators whose coefficient sequences satisfy a
degree-d linear recurrence.  Then correlated Gaussian noise B z for
differentially private prefix sums can be produced in O(d m) space per step,
and the max-error objective ||B||_{2->inf} * ||C||_{1->2} has a closed form.
"""

from .seq import ToeplitzSeq, optimal_coeffs, cauchy_product, series_reciprocal, ltt_apply_dense
from .params import (
    RationalBlt,
    MatrixPowerForm,
    BltFactorization,
    residues_from_roots,
    blt_coeffs,
    companion_form,
    reciprocal_matrix_form,
    degree1_closed_form,
    save_factorization,
    load_factorization,
)
from .error_eval import (
    GeometricSum,
    MaxErrReport,
    geometric_prefix,
    sensitivity_closed,
    rownorm_closed,
    max_err,
    bounds_table,
)
from .streaming import StreamState, NoiseStreamConfig, stream_init, stream_step, noise_stream
from .rational import SqrtApproxTerms, newman_sqrt, degree_for_error, ra_blt_build, weighted_parseval_check
from .optimizer import OptConfig, OptResult, loss, gradient, optimize_blt
from .recursive import (
    comb_dense,
    comc_dense,
    recursive_norms,
    recursive_stream,
    theorem2_params,
)

__all__ = [
    "ToeplitzSeq",
    "optimal_coeffs",
    "cauchy_product",
    "series_reciprocal",
    "ltt_apply_dense",
    "RationalBlt",
    "MatrixPowerForm",
    "BltFactorization",
    "residues_from_roots",
    "blt_coeffs",
    "companion_form",
    "reciprocal_matrix_form",
    "degree1_closed_form",
    "save_factorization",
    "load_factorization",
    "GeometricSum",
    "MaxErrReport",
    "geometric_prefix",
    "sensitivity_closed",
    "rownorm_closed",
    "max_err",
    "bounds_table",
    "StreamState",
    "NoiseStreamConfig",
    "stream_init",
    "stream_step",
    "noise_stream",
    "SqrtApproxTerms",
    "newman_sqrt",
    "degree_for_error",
    "ra_blt_build",
    "weighted_parseval_check",
    "OptConfig",
    "OptResult",
    "loss",
    "gradient",
    "optimize_blt",
    "comb_dense",
    "comc_dense",
    "recursive_norms",
    "recursive_stream",
    "theorem2_params",
]

__version__ = "0.1.0"
