"""Exception hierarchy shared by every calderon_lab module.

Two roots decide how the CLI exits:

- ``ConfigError`` (a ``ValueError``): the input is malformed or asks for
  something a module precondition forbids. Exit code 1.
- ``NumericFailure`` (a ``RuntimeError``): a named numeric condition was hit
  while building or solving. Exit code 2.
"""

from __future__ import annotations


class ConfigError(ValueError):
    """Configuration or check-suite input is invalid."""


class NumericFailure(RuntimeError):
    """Base class for the named numeric errors of the lab modules."""


# geometry


class MeshGenerationError(NumericFailure):
    """A mesh could not be generated for the requested shape and resolution."""


class EmptyGammaRho(NumericFailure):
    """Γ_ρ is empty for the requested ρ."""


class TauTooLarge(NumericFailure):
    """A singularity offset leaves the admissible placement region."""


# conductivity


class OutOfDomain(NumericFailure):
    """A coefficient was evaluated outside the domain it is defined on."""


class EpsilonTooLarge(NumericFailure):
    """Mollification radius exceeds ρ/2."""


# fem


class SingularSystem(NumericFailure):
    """The assembled linear system could not be factorized or solved."""


class IncompatibleFlux(NumericFailure):
    """Neumann data violate the compatibility condition ∫ψ = 0."""


class SourceTooCloseToBoundary(NumericFailure):
    """A point source sits too close to the Dirichlet boundary."""


# maps


class DegenerateGamma(NumericFailure):
    """Γ carries too few boundary nodes to build a trace space."""


class SpaceMismatch(NumericFailure):
    """Two operators do not act on the same boundary space."""


# singular


class EvalAtSingularity(NumericFailure):
    """A singular term was evaluated at its center."""


class InsufficientRadii(NumericFailure):
    """Too few admissible radii for a rate fit."""


# recovery


class SupportViolation(NumericFailure):
    """Traces or fluxes leak outside Γ above tolerance."""


class DegenerateIntersection(NumericFailure):
    """B_{r0}(z_τ) ∩ Ω is too small, or the normalizer is not positive."""


class NonMonotoneEstimates(UserWarning):
    """Recovered boundary estimates are not Cauchy along the τ schedule."""
