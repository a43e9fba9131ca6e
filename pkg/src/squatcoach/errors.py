"""Exception types shared across the package."""


class SquatCoachError(Exception):
    """Base class for all package errors."""


class DegenerateGeometry(SquatCoachError):
    """Raised when coincident joints make an angle undefined."""

    def __init__(self, joints, frame_index=None):
        self.joints = tuple(joints)
        self.frame_index = frame_index
        where = f" at frame {frame_index}" if frame_index is not None else ""
        super().__init__(f"coincident joints {'/'.join(self.joints)}{where}")


class TooShort(SquatCoachError):
    """Series too short to resample or interpolate."""


class StratificationError(SquatCoachError):
    """A class has too few examples for a stratified split."""


class EmptyClass(SquatCoachError):
    """A model's training view produced an empty class."""


class TrainingDiverged(SquatCoachError):
    """Loss became non-finite during training."""


class ChannelMismatch(SquatCoachError):
    """Input tensor does not carry a channel the model expects."""


class TooManyPlayers(SquatCoachError):
    """Exact Shapley enumeration is infeasible for this many players."""


class InvalidTransition(SquatCoachError):
    """Illegal session state-machine transition."""


class StreamOrderError(SquatCoachError):
    """Joint frames arrived with non-increasing timestamps."""


class InfeasiblePose(SquatCoachError):
    """Requested angles have no planar-linkage solution."""


class FormatError(SquatCoachError):
    """A persisted file violates its format contract."""


class PersistError(SquatCoachError):
    """Durable write failed; safe to retry after checking the target."""


class DuplicateId(SquatCoachError):
    """A record with this identifier already exists."""


class NotFound(SquatCoachError):
    """No persisted record with this identifier."""
