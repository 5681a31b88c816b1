"""Exception types raised by the segmented filters and joiners."""


class SegmentedFilterError(RuntimeError):
    """Base class for numerical failures inside a replicate."""


class DegenerateWeightsError(SegmentedFilterError):
    """Every importance weight at a stage is zero (particle collapse)."""


class DominanceError(SegmentedFilterError):
    """A segment initializer assigns zero density where the transition does not."""


class DegenerateJoinError(SegmentedFilterError):
    """The joined normalizer underflowed to zero."""
