""" Flat ``key = value`` campaign configuration files

    # comment
    dataset = synthetic
    lambda = 0.5
    hidden = 64, 64

Command-line overrides win over file keys; ANISCERT_SEED wins over the file's
seed but not over an explicit override.
"""
import logging
import os
from typing import Dict, Mapping, Optional, Tuple

from pydantic import ValidationError

from ..core.exceptions import ConfigError
from ..models.request_models import CampaignConfig

logger = logging.getLogger(__name__)

SEED_ENV = "ANISCERT_SEED"


def known_keys() -> Dict[str, str]:
    """ file key -> field name """
    keys = {}
    for name, field in CampaignConfig.__fields__.items():
        keys[name] = name
        keys[field.alias] = name
    return keys


def parse_lines(text: str) -> Dict[str, Tuple[str, int]]:
    """ Returns {key: (raw value, line number)} """
    keys = known_keys()
    entries: Dict[str, Tuple[str, int]] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError("expected 'key = value'", line=number)
        if key not in keys:
            raise ConfigError("unknown key", key=key, line=number)
        if not value:
            raise ConfigError("missing value", key=key, line=number)
        if keys[key] in {keys[k] for k in entries}:
            raise ConfigError("duplicate key", key=key, line=number)
        entries[key] = (value, number)
    return entries


def build_config(entries: Mapping[str, Tuple[str, Optional[int]]]) -> CampaignConfig:
    """ Validates the collected entries, naming the key and line of the first failure """
    keys = known_keys()
    values = {keys[key]: value for key, (value, _) in entries.items()}
    try:
        return CampaignConfig.parse_obj(values)
    except ValidationError as e:
        error = e.errors()[0]
        location = str(error["loc"][0])
        field = keys.get(location, location)
        key = next((k for k in entries if keys[k] == field), field)
        line = entries[key][1] if key in entries else None
        raise ConfigError(error["msg"], key=key, line=line)


def parse_campaign_config(text: str, overrides: Optional[Mapping[str, str]] = None,
                          environ: Optional[Mapping[str, str]] = None) -> CampaignConfig:
    entries: Dict[str, Tuple[str, Optional[int]]] = dict(parse_lines(text))
    environ = os.environ if environ is None else environ
    if environ.get(SEED_ENV):
        entries["seed"] = (environ[SEED_ENV], None)
    keys = known_keys()
    for key, value in (overrides or {}).items():
        if key not in keys:
            raise ConfigError("unknown key", key=key)
        for existing in [k for k in entries if keys[k] == keys[key]]:
            del entries[existing]
        entries[key] = (str(value), None)
    return build_config(entries)


def load_campaign_config(path: Optional[str], overrides: Optional[Mapping[str, str]] = None,
                         environ: Optional[Mapping[str, str]] = None) -> CampaignConfig:
    """ Reads a config file (or only overrides and defaults when path is None) """
    text = ""
    if path is not None:
        try:
            with open(path) as f:
                text = f.read()
        except OSError as e:
            raise ConfigError(f"cannot read config file {path}: {e.strerror}")
    config = parse_campaign_config(text, overrides, environ)
    logger.debug("campaign config: %s", config.json(by_alias=True))
    return config
