"""Exception hierarchy shared across the package."""


class MhprogError(Exception):
    """Base class for all package errors."""


class MalformedRow(MhprogError):
    def __init__(self, line, reason):
        self.line = line
        self.reason = reason
        super().__init__(f"line {line}: {reason}")


class DuplicateStage(MhprogError):
    def __init__(self, eye_id, stage):
        self.eye_id = eye_id
        self.stage = stage
        super().__init__(f"eye {eye_id!r} has more than one {stage} record")


class UnknownLabelCode(MhprogError):
    def __init__(self, code, position):
        self.code = code
        self.position = position
        super().__init__(f"unknown label code {code} at (row, col) {position}")


class UnreadableImage(MhprogError):
    pass


class MissingBcva(MhprogError):
    def __init__(self, stage):
        self.stage = stage
        super().__init__(f"BCVA missing at stage {stage}")


class NoScans(MhprogError):
    def __init__(self, eye_id, stage):
        self.eye_id = eye_id
        self.stage = stage
        super().__init__(f"eye {eye_id!r} stage {stage} has no scans")


class MissingBaseline(MhprogError):
    pass


class ZeroDay(MhprogError):
    pass


class EmptyComponent(MhprogError):
    pass


class DegenerateSample(MhprogError):
    pass


class AllColumnsDropped(MhprogError):
    pass


class RankDeficient(MhprogError):
    pass


class OneClassOnly(MhprogError):
    pass


class ShapeMismatch(MhprogError):
    pass


class EmptyInput(MhprogError):
    pass


class UnpairedFile(MhprogError):
    pass


class NonFinite(MhprogError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"non-finite gradient for parameter {name!r}")


class Diverged(MhprogError):
    pass


class InsufficientData(MhprogError):
    pass
