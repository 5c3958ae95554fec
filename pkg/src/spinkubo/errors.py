"""Exception hierarchy shared by all spinkubo modules."""


class SpinKuboError(Exception):
    """Base class; ``exit_code`` is the CLI status used when it escapes."""

    exit_code = 3


class ConfigInvalid(SpinKuboError):
    exit_code = 2


class GapClosed(SpinKuboError):
    """No spectral gap at the requested filling (or mu hits the spectrum)."""


class AliasingRisk(SpinKuboError):
    """Truncation radius too large for the Brillouin-zone grid (R >= M/2)."""


class DegenerateFit(SpinKuboError):
    """Decay fit impossible because all off-diagonal blocks vanish."""


class WindowTooSmall(SpinKuboError):
    pass


class OddnessViolated(SpinKuboError):
    pass


class TailNotControlled(SpinKuboError):
    pass


class SingularPlaquette(SpinKuboError):
    """A link overlap determinant is too small for the lattice Chern method."""


class LTooSmall(SpinKuboError):
    pass


class DecayTooSlow(SpinKuboError):
    pass


class NonRealValue(SpinKuboError):
    """A quantity that must be real carries an imaginary part above tolerance."""
