"""Exception types shared by the numerical modules."""


class FloquetBergmanError(Exception):
    """Base class for all library errors."""


class PoleProximity(FloquetBergmanError):
    """Evaluation requested at (or numerically too near) a pole."""


class BadParameter(FloquetBergmanError, ValueError):
    pass


class OutsideDomain(FloquetBergmanError, ValueError):
    """Point does not belong to the periodic domain."""


class OutsideCell(OutsideDomain):
    pass


class NoPositiveR(FloquetBergmanError):
    """No quasimomentum radius could be certified for the multiplier."""


class BranchViolation(FloquetBergmanError):
    """The principal power branch of the multiplier is not available."""


class DegenerateCell(FloquetBergmanError):
    pass


class RankCollapse(FloquetBergmanError):
    pass


class LengthMismatch(FloquetBergmanError, ValueError):
    pass


class DimensionMismatch(FloquetBergmanError, ValueError):
    pass


class ResidualTooLarge(FloquetBergmanError):
    """Cell function violates the quasiperiodic boundary conditions."""


class WindowUnresolved(FloquetBergmanError):
    pass


class MemoryGuard(FloquetBergmanError):
    pass


class SweepAborted(FloquetBergmanError):
    """Too many quasimomentum nodes failed during a band sweep."""


class ConfigError(FloquetBergmanError, ValueError):
    pass


class IllConditioned(UserWarning):
    """Retained Gram block has a large condition number."""


class AliasRisk(UserWarning):
    """Quasimomentum grid too coarse for the truncated index set."""
