"""Exception hierarchy.

Every error carries a machine-readable ``code`` and the process exit status
the command line front end maps it to (1 runtime error, 2 assumption or
feasibility failure).
"""


class DuioError(Exception):
    code = "error"
    exit_status = 1


class InvalidMatrix(DuioError, ValueError):
    code = "invalid_matrix"


class RankDeficient(DuioError, ValueError):
    code = "rank_deficient"


class BoundaryAmbiguous(DuioError):
    """An eigenvalue sits within the stability margin of the unit circle."""

    code = "boundary_ambiguous"

    def __init__(self, message, eigenvalues=()):
        super().__init__(message)
        self.eigenvalues = tuple(eigenvalues)


class BoundaryAmbiguityWarning(UserWarning):
    pass


class InvalidScenario(DuioError, ValueError):
    code = "invalid_scenario"


class UioNotConstructible(DuioError):
    code = "uio_not_constructible"
    exit_status = 2


class DecouplingFailed(DuioError):
    code = "decoupling_failed"
    exit_status = 2


class SynthesisInfeasible(DuioError):
    code = "synthesis_infeasible"
    exit_status = 2


class ConsensusInfeasible(DuioError):
    code = "consensus_infeasible"
    exit_status = 2


class InvalidDesign(DuioError, ValueError):
    code = "invalid_design"


class RiccatiDiverged(DuioError):
    code = "riccati_diverged"


class ProtocolViolation(DuioError):
    code = "protocol_violation"
