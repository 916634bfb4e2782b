"""Exception taxonomy shared across the package."""


class JetsymError(Exception):
    """Base class for all package-specific errors."""


class ExprSyntaxError(JetsymError):
    """Malformed expression text; carries the offending position."""

    def __init__(self, message, pos):
        super().__init__(f"{message} (at position {pos})")
        self.pos = pos


class UnknownSymbolError(JetsymError):
    def __init__(self, name, pos=None):
        where = f" (at position {pos})" if pos is not None else ""
        super().__init__(f"unknown symbol {name!r}{where}")
        self.name = name
        self.pos = pos


class UnknownFunctionError(JetsymError):
    def __init__(self, name, pos=None):
        where = f" (at position {pos})" if pos is not None else ""
        super().__init__(f"unknown function {name!r}{where}")
        self.name = name
        self.pos = pos


class DomainEvalError(JetsymError):
    """Evaluation hit a singular locus (log of nonpositive, division by ~0, ...)."""


class UnboundSymbolError(JetsymError):
    """An evaluation point left a free symbol unassigned."""


class PersistentDomainFailureError(JetsymError):
    """More than 90% of oracle sample attempts hit singularities."""


class OrderOverflowError(JetsymError):
    """A total derivative needs jet coordinates beyond the space's max order."""

    def __init__(self, needed_order, max_order):
        super().__init__(
            f"operation needs jet order {needed_order} but the space stops at {max_order}"
        )
        self.needed_order = needed_order
        self.max_order = max_order


class InvalidTwistError(JetsymError):
    """Twist data depends on jet coordinates of order >= 2."""


class MCHViolationError(JetsymError):
    """The matrix one-form fails the horizontal zero-curvature condition."""


class NonVerticalInputError(JetsymError):
    """A gauge diagram was requested for a field with nonzero horizontal part."""


class SingularAtSampleError(JetsymError):
    """A gauge matrix determinant vanished at a sampled point."""


class DegenerateBaseError(JetsymError):
    """The base invariant has identically vanishing total derivative."""


class IBDPViolationError(JetsymError):
    """A generated invariant candidate is not annihilated by the defining fields."""

    def __init__(self, order, detail=""):
        extra = f": {detail}" if detail else ""
        super().__init__(f"invariants-by-differentiation fails at order {order}{extra}")
        self.order = order


class NonGenericChainError(JetsymError):
    """An elimination pivot of the invariant chain vanishes."""


class NotExpressibleError(JetsymError):
    """The reduced equation still depends on a non-invariant coordinate."""

    def __init__(self, symbol, witness=None):
        super().__init__(
            f"reduced equation depends on non-invariant coordinate {symbol!r}"
            + (f" (witness {witness})" if witness else "")
        )
        self.symbol = symbol
        self.witness = witness


class NeedsUnavailableDerivativeError(JetsymError):
    """Restriction requires differential consequences beyond the space's order."""


class NotInvolutiveError(JetsymError):
    """A commutator leaves the pointwise span of the field set."""

    def __init__(self, pair, point=None):
        super().__init__(
            f"fields {pair[0]} and {pair[1]} are not in involution"
            + (f" (witness {point})" if point else "")
        )
        self.pair = pair
        self.point = point


class DegenerateDistributionError(JetsymError):
    """The field set is rank-deficient at almost every sampled point."""


class DegenerateLagrangianError(JetsymError):
    """The velocity Hessian of a Lagrangian is singular at sampled points."""


class IllConditionedSampleError(JetsymError):
    """The sampled linear system stayed ill-conditioned after resampling."""


class PreconditionFailureError(JetsymError):
    """A lemma-level construction was invoked with a violated hypothesis."""
