"""Exception hierarchy.

Every error carries a stable ``code`` string so the CLI can emit a
machine-readable report and map the failure class onto an exit status.
"""


class CovprepError(Exception):
    code = "error"
    #: ``data`` errors come from bad inputs, ``numerical`` from algorithms
    category = "data"


class DimMismatch(CovprepError, ValueError):
    code = "dim_mismatch"


class LengthMismatch(CovprepError, ValueError):
    code = "length_mismatch"


class NotHermitian(CovprepError, ValueError):
    code = "not_hermitian"


class NotUnitary(CovprepError, ValueError):
    code = "not_unitary"


class NotDensity(CovprepError, ValueError):
    code = "not_density"


class NotNormalized(CovprepError, ValueError):
    code = "not_normalized"


class NotSorted(CovprepError, ValueError):
    code = "not_sorted"


class OutOfRange(CovprepError, ValueError):
    code = "out_of_range"


class InvalidEnsemble(CovprepError, ValueError):
    code = "invalid_ensemble"


class ZeroVector(CovprepError, ValueError):
    code = "zero_vector"


class DimTooSmall(CovprepError, ValueError):
    code = "dim_too_small"


class ZeroMean(CovprepError, ValueError):
    code = "zero_mean"


class NTooLarge(CovprepError, ValueError):
    code = "n_too_large"


class NoConvergence(CovprepError, ArithmeticError):
    code = "no_convergence"
    category = "numerical"


class BadMagic(CovprepError, ValueError):
    code = "bad_magic"


class TruncatedPayload(CovprepError, ValueError):
    code = "truncated_payload"


class UnsupportedType(CovprepError, ValueError):
    code = "unsupported_type"


class NotEnoughInstances(CovprepError, ValueError):
    code = "not_enough_instances"


class CorruptFile(CovprepError, ValueError):
    code = "corrupt_file"


class VersionMismatch(CovprepError, ValueError):
    code = "version_mismatch"


class DegenerateGroundState(UserWarning):
    """Two lowest levels closer than the degeneracy threshold."""


class NoImprovement(UserWarning):
    """Optimizer finished without lowering the cost."""
