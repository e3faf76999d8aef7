"""Exception types shared across the package."""


class KuramotoOedError(Exception):
    """Base class for domain errors raised by this package."""


class IntegrationDivergedError(KuramotoOedError):
    """The ODE state became non-finite during integration."""

    def __init__(self, step: int):
        self.step = step
        super().__init__(f"integration diverged (non-finite state) at step {step}")


class InconsistentObservationError(KuramotoOedError):
    """An experimental outcome is impossible under the current bounds."""


class UnsynchronizableError(KuramotoOedError):
    """Bracket expansion exhausted without finding a synchronizing coupling."""


class SchemaMismatchError(KuramotoOedError):
    """Feature dimensions do not match the classifier's schema."""


class GenerationError(KuramotoOedError):
    """Dataset generation could not fill the requested class quotas."""


class DesignSpaceExhaustedError(KuramotoOedError):
    """Every pairwise experiment has already been performed."""
