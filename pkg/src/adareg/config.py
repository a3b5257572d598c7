"""Loading and schema validation of YAML scenario configs."""
import json
from functools import lru_cache
from importlib import resources

import yaml
from jsonschema import Draft202012Validator
from jsonschema.exceptions import best_match

from .errors import SchemaError

SCHEMA_VERSION = 1


@lru_cache(maxsize=1)
def schema():
    text = resources.files("adareg").joinpath("config_schema.json").read_text(encoding="utf-8")
    return json.loads(text)


def _path(err):
    return ".".join(str(p) for p in err.absolute_path)


def validate(cfg):
    """Raise SchemaError listing every (field path, message) problem in ``cfg``."""
    if not isinstance(cfg, dict):
        raise SchemaError([("", "config must be a mapping at the top level")])
    errors = []
    for err in Draft202012Validator(schema()).iter_errors(cfg):
        # oneOf failures are more useful reported through their closest branch
        shown = best_match(err.context) if err.context else err
        errors.append((_path(shown), shown.message))
    has_builtin, has_model = "scenario" in cfg, "model" in cfg
    if has_builtin == has_model:
        errors.append(("", "exactly one of 'scenario' (a builtin name) or 'model' (inline) is required"))
    if has_model:
        for key in ("drift", "initial"):
            if key not in cfg:
                errors.append((key, "required for an inline model"))
    if errors:
        raise SchemaError(sorted(set(errors)))
    return cfg


def load(path):
    """Parse and validate a config file."""
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise SchemaError([("", f"YAML parse error: {exc}")]) from None
    if cfg is None:
        cfg = {}
    return validate(cfg)
