# qmsep/services/errors.py


class NumericalInconsistencyError(RuntimeError):
    """
    Two independent computations of the same quantity disagree beyond tolerance.
    Usually a sign of an unstable numerical rank; try adjusting QMSEP_REL_TOL.
    """
