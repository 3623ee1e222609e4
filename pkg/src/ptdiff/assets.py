"""Bundled 16x16 grayscale test patterns.

The patterns are committed PGM files (see scripts/gen_assets.py for the
generator). Names double as prompt vocabulary for the analytic backend:
a component token like "stripes" selects every pattern whose name
starts with it.
"""

from importlib import resources

from .errors import ParameterError
from .formats import read_pgm

PATTERN_NAMES = (
    "stripes_h",
    "stripes_v",
    "stripes_d",
    "checker_2",
    "checker_4",
    "rings",
    "gradient",
    "blob",
)

REFERENCE_NAME = "face"


def _asset_dir():
    return resources.files("ptdiff") / "assets"


def asset_path(name):
    path = _asset_dir() / f"{name}.pgm"
    if not path.is_file():
        raise ParameterError(f"no bundled asset named {name!r}")
    return path


def load_asset(name):
    """Bundled pattern as an (H, W) array in [0, 1]."""
    return read_pgm(asset_path(name))


def load_patterns(names=PATTERN_NAMES):
    return [load_asset(name) for name in names]


def match_components(tokens, names=PATTERN_NAMES):
    """Indices of patterns matched by name, prefix, or integer tokens."""
    indices = []
    for token in tokens:
        token = token.strip()
        if not token:
            continue
        if token.lstrip("-").isdigit():
            i = int(token)
            if not 0 <= i < len(names):
                raise ParameterError(f"component index {i} out of range")
            hits = [i]
        else:
            hits = [i for i, n in enumerate(names) if n == token]
            if not hits:
                hits = [i for i, n in enumerate(names) if n.startswith(token)]
            if not hits:
                raise ParameterError(
                    f"component {token!r} matches no pattern in {list(names)}"
                )
        for i in hits:
            if i not in indices:
                indices.append(i)
    if not indices:
        raise ParameterError("no components selected")
    return indices
