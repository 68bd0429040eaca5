"""Boundary-driven interacting particle and energy models with their absorbing duals.

Families: SIP, SEP, IRW, BEP, KMP and the thermalized ThSIP, ThSEP, ThIRW,
ThBEP.  Submodules:

models      specs, validation, single-site laws
generator   sparse master-equation generators and stationary solves
duality     dual processes, duality functions, absorption probabilities
kmc         kinetic Monte Carlo and transport estimators
diffusion   BEP Euler-Maruyama and the KMP/ThBEP jump engine
analysis    closed forms, correlation systems, multilinearity, scaling limits
mft         macroscopic correlations and the large-deviation functional
verify      named invariant suites
cli         the ``stochdual`` command
"""
from .models import Family, ModelError, ModelSpec, make_spec, spec_from_dict

__all__ = ["Family", "ModelError", "ModelSpec", "make_spec", "spec_from_dict"]
