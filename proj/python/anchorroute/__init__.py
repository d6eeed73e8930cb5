"""Sparse-anchor motion synthesis on synthetic tasks.

Thin Python layer over the C++ core: scaffold construction, the
transition-masked token sampler, AnchorKV attention and the routed
refinement solver. Pipeline entry points take the same JSON config as the
``anchorroute`` command-line tool.
"""

import json as _json

from ._anchorroute import (
    AnchorRouteError,
    ConfigError,
    DomainError,
    InvalidCodebookError,
    InvalidFamilyError,
    NonFiniteError,
    ShapeError,
    SingularSystemError,
    anchor_loss,
    attend,
    beta,
    build_basis,
    build_features,
    control_error,
    corruption_dist,
    interp_prior,
    jump_rates,
    make_codebook,
    make_motion,
    observe,
    route,
    sample_oracle,
)
from . import _anchorroute as _core


def _config_text(config):
    if config is None:
        return "{}"
    if isinstance(config, str):
        return config
    return _json.dumps(config)


def run_sample(config=None):
    """Build the synthetic world and sample tokens; config is a dict or JSON text."""
    return _core.run_sample(_config_text(config))


def run_refine(config=None):
    """Sample (or take initial_tokens) and run routed refinement."""
    return _core.run_refine(_config_text(config))


def cmd_sample(config, out_dir):
    """Same as ``anchorroute sample``; returns the summary dict."""
    return _json.loads(_core.cmd_sample(_config_text(config), str(out_dir)))


def cmd_refine(config, out_dir):
    """Same as ``anchorroute refine``; returns the summary dict."""
    return _json.loads(_core.cmd_refine(_config_text(config), str(out_dir)))


__all__ = [name for name in dir() if not name.startswith("_")]
