"""Limit laws of randomly indexed statistics."""

from .gig import GigParams, gig_cdf, gig_moment, gig_pdf, gig_sample
from .mixtures import GhParams, MixtureSpec, gh_pdf, gh_sample
from .specfun import bessel_k, bessel_k_log

__version__ = "0.1.0"

__all__ = [
    "GhParams",
    "GigParams",
    "MixtureSpec",
    "bessel_k",
    "bessel_k_log",
    "gh_pdf",
    "gh_sample",
    "gig_cdf",
    "gig_moment",
    "gig_pdf",
    "gig_sample",
]
