"""JSON-document <-> object conversion for distributions and experiment designs.

The document shapes are described by the JSON schema in ``schema.py``;
functions here assume a document that already passed validation.
"""

from .gig import GigParams
from .mixtures import EmpiricalMixing, GhParams, GigMixing, MvnParams, PointMass
from .randindex import (
    Design,
    ExponentialData,
    GaussianData,
    MixedPoisson,
    NegBinomial,
    NormalizationScheme,
    ScaledRound,
    UniformCubeData,
)


def _floats(v):
    return [float(x) for x in v]


def gig_from_dict(d):
    return GigParams(d["nu"], d["mu"], d["lambda"])


def gig_to_dict(p):
    return {"nu": p.nu, "mu": p.mu, "lambda": p.lam}


def gh_from_dict(d):
    return GhParams(
        d["nu"],
        d["mu"],
        d["alpha"],
        d["drift"],
        d["location"],
        d["sigma"],
        normalize=d.get("normalize_det", False),
    )


def gh_to_dict(p):
    return {
        "nu": p.nu,
        "mu": p.mu,
        "alpha": p.alpha,
        "drift": _floats(p.drift),
        "location": _floats(p.location),
        "sigma": [_floats(row) for row in p.sigma],
    }


def mixing_from_dict(d):
    kind = d["kind"]
    if kind == "gig":
        return GigMixing(gig_from_dict(d))
    if kind == "point_mass":
        return PointMass(d["value"])
    return EmpiricalMixing(d["sample"])


def mixing_to_dict(m):
    if isinstance(m, GigMixing):
        return {"kind": "gig", **gig_to_dict(m.params)}
    if isinstance(m, PointMass):
        return {"kind": "point_mass", "value": m.value}
    return {"kind": "empirical", "sample": _floats(m.sample_values)}


def size_model_from_dict(d):
    kind = d["kind"]
    if kind == "neg_binomial":
        return NegBinomial(d["r"])
    mixing = mixing_from_dict(d["mixing"])
    return ScaledRound(mixing) if kind == "scaled_round" else MixedPoisson(mixing)


def size_model_to_dict(s):
    if isinstance(s, NegBinomial):
        return {"kind": "neg_binomial", "r": s.r}
    kind = "scaled_round" if isinstance(s, ScaledRound) else "mixed_poisson"
    return {"kind": kind, "mixing": mixing_to_dict(s.mixing)}


def data_model_from_dict(d):
    kind = d["kind"]
    if kind == "iid_gaussian":
        return GaussianData(MvnParams(d["mean"], d["covariance"]))
    if kind == "iid_uniform_cube":
        return UniformCubeData(d["center"], d["half_width"])
    return ExponentialData(d["rates"])


def data_model_to_dict(m):
    if isinstance(m, GaussianData):
        return {
            "kind": "iid_gaussian",
            "mean": _floats(m.params.mean),
            "covariance": [_floats(r) for r in m.params.sigma],
        }
    if isinstance(m, UniformCubeData):
        return {"kind": "iid_uniform_cube", "center": _floats(m.center), "half_width": m.half_width}
    return {"kind": "iid_exponential_product", "rates": _floats(m.rates)}


def scheme_from_dict(d):
    return NormalizationScheme(
        drift=d["drift"],
        location=d["location"],
        sigma=d.get("sigma", 1.0),
        theta=d.get("theta"),
        sign_convention=d.get("sign_convention", "paper_minus"),
    )


def scheme_to_dict(s):
    out = {
        "drift": _floats(s.drift),
        "location": _floats(s.location),
        "sigma": s.sigma,
        "sign_convention": s.sign_convention,
    }
    if s.theta is not None:
        out["theta"] = _floats(s.theta)
    return out


def design_from_dict(d):
    return Design(
        data_model_from_dict(d["data_model"]),
        size_model_from_dict(d["size_model"]),
        scheme_from_dict(d["normalization"]),
    )


def design_to_dict(design):
    return {
        "data_model": data_model_to_dict(design.data_model),
        "size_model": size_model_to_dict(design.size_model),
        "normalization": scheme_to_dict(design.scheme),
    }
