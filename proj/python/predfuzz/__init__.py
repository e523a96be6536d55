"""Python access to the predictive greybox fuzzer core."""

import json

from . import _core
from ._core import ConfigError, mann_whitney_u, vargha_delaney_a12

__version__ = _core.version


def generate_program(params=""):
    """Program spec (dict) from a 'key=value,...' generation string."""
    return json.loads(_core.generate_program(params))


def execute(program, data):
    return json.loads(_core.execute(json.dumps(program), bytes(data)))


def parse_config(args):
    """Campaign config (dict) from command-line style arguments."""
    return json.loads(_core.parse_config(list(args)))


def run_campaign(config):
    """Runs a campaign; `config` is a dict as returned by parse_config."""
    return json.loads(_core.run_campaign(json.dumps(config)))


def campaign_csv(report):
    return _core.campaign_csv(json.dumps(report))


__all__ = [
    "ConfigError",
    "campaign_csv",
    "execute",
    "generate_program",
    "mann_whitney_u",
    "parse_config",
    "run_campaign",
    "vargha_delaney_a12",
]
