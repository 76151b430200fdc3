"""Shared exception types."""


class CutoffCertificationError(RuntimeError):
    """A truncation/tail certificate could not be established.

    Raised when a reported bound (heat-kernel tail, coalescence horizon,
    degenerate labeling) exceeds its tolerance instead of silently returning
    an uncertified number.
    """
