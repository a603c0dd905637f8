"""Characteristic values of holomorphic families ``I - A(z)/z``.

Contour-integral indices, localization and counting, a zoo of synthetic and
extremal models, and resonances of the magnetic Schroedinger operator near
Landau levels.
"""
__version__ = "0.1.0"

from .contours import Annulus, Rectangle, SectorRegion, circle, make_contour, region_from_spec
from .core import (
    CharvalError,
    ContourHitError,
    ContractError,
    DomainError,
    MatrixFunction,
    OperatorFamily,
    ParameterError,
    SpectralProfile,
    cauchy_derivative,
    kernel_projector,
)
from .counting import (
    CountingReport,
    LawDescriptor,
    fit_law,
    free_region_scan,
    verify_sector_asymptotics,
    verify_small_domain_theorem,
)
from .engine import (
    CharacteristicValue,
    det_p,
    index,
    localize,
    multiplicity,
    rouche_assert,
    scalar_index,
)
from .magnetic import (
    MagneticModel,
    PotentialSpec,
    ResonanceSet,
    asymptotic_law,
    assemble_Aq,
    find_resonances,
    toeplitz_counting,
)
from .models import (
    SyntheticModelSpec,
    build_inductive_sequences,
    counterexample_noncompact,
    counterexample_noninvertible,
    counterexample_nonselfadjoint,
    make_synthetic,
    model_from_spec,
    polynomial_family,
)
