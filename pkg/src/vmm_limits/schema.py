"""JSON schema of the command-line configuration document."""

import jsonschema

from .errors import ConfigError

_NUMBER = {"type": "number"}
_POSITIVE = {"type": "number", "exclusiveMinimum": 0}
_VECTOR = {"type": "array", "items": _NUMBER, "minItems": 1}
_MATRIX = {"type": "array", "items": _VECTOR, "minItems": 1}
_COUNT = {"type": "integer", "minimum": 0}


def _obj(properties, required=()):
    return {
        "type": "object",
        "properties": properties,
        "required": list(required),
        "additionalProperties": False,
    }


GIG = _obj({"nu": _NUMBER, "mu": _NUMBER, "lambda": _NUMBER}, ["nu", "mu", "lambda"])

GH = _obj(
    {
        "nu": _NUMBER,
        "mu": _NUMBER,
        "alpha": _NUMBER,
        "drift": _VECTOR,
        "location": _VECTOR,
        "sigma": _MATRIX,
        "normalize_det": {"type": "boolean"},
    },
    ["nu", "mu", "alpha", "drift", "location", "sigma"],
)

MIXING = {
    "oneOf": [
        _obj({"kind": {"const": "gig"}, **GIG["properties"]}, ["kind", "nu", "mu", "lambda"]),
        _obj({"kind": {"const": "point_mass"}, "value": _POSITIVE}, ["kind", "value"]),
        _obj(
            {"kind": {"const": "empirical"}, "sample": {"type": "array", "items": _POSITIVE, "minItems": 1}},
            ["kind", "sample"],
        ),
    ]
}

SIZE_MODEL = {
    "oneOf": [
        _obj({"kind": {"const": "scaled_round"}, "mixing": MIXING}, ["kind", "mixing"]),
        _obj({"kind": {"const": "mixed_poisson"}, "mixing": MIXING}, ["kind", "mixing"]),
        _obj({"kind": {"const": "neg_binomial"}, "r": _POSITIVE}, ["kind", "r"]),
    ]
}

DATA_MODEL = {
    "oneOf": [
        _obj(
            {"kind": {"const": "iid_gaussian"}, "mean": _VECTOR, "covariance": _MATRIX},
            ["kind", "mean", "covariance"],
        ),
        _obj(
            {"kind": {"const": "iid_uniform_cube"}, "center": _VECTOR, "half_width": _POSITIVE},
            ["kind", "center", "half_width"],
        ),
        _obj({"kind": {"const": "iid_exponential_product"}, "rates": _VECTOR}, ["kind", "rates"]),
    ]
}

NORMALIZATION = _obj(
    {
        "drift": _VECTOR,
        "location": _VECTOR,
        "sigma": _POSITIVE,
        "theta": _VECTOR,
        "sign_convention": {"enum": ["paper_minus", "mixture_plus"]},
    },
    ["drift", "location"],
)

EXPERIMENT = _obj(
    {
        "data_model": DATA_MODEL,
        "size_model": SIZE_MODEL,
        "normalization": NORMALIZATION,
        "n_grid": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
        "replications": {"type": "integer", "minimum": 1},
        "cf_radius": _POSITIVE,
        "cf_points_per_axis": {"type": "integer", "minimum": 1},
        "cf_eps": _POSITIVE,
        "strata": {"type": "integer", "minimum": 10},
        "sizes_per_stratum": {"type": "integer", "minimum": 1},
        "block_size": {"type": "integer", "minimum": 1},
        "coherency": {"type": "boolean"},
    },
    ["data_model", "size_model", "normalization", "n_grid", "replications"],
)

COMMAND_PARAMS = _obj(
    {
        "gig": GIG,
        "gh": GH,
        "x": {"type": "array", "items": {"anyOf": [_NUMBER, _VECTOR]}},
        "count": _COUNT,
        "order": _NUMBER,
    }
)

CONFIG = _obj(
    {
        "command_params": COMMAND_PARAMS,
        "experiment": EXPERIMENT,
        "seed": {"type": "integer", "minimum": 0},
        "tolerances": {"type": "object", "additionalProperties": _NUMBER},
    }
)


def validate(document):
    """Raise ConfigError unless ``document`` matches the configuration schema."""
    try:
        jsonschema.validate(document, CONFIG)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"invalid configuration at {where}: {exc.message}") from None
