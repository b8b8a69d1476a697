"""JSON documents written by the CLI and the schemas shipped for them.

The schema files under ``tilt_solver/schemas`` are exported from the pydantic
models below; regenerate them with ``tilt-solver schemas tilt_solver/schemas``
after changing a model.
"""
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Type, Union

from pydantic import BaseModel

from tilt_solver.config.run_config import ConfigEcho

logger = logging.getLogger(__name__)

SCHEMA_DIR = Path(__file__).parent / "schemas"


class TauReport(BaseModel):
    """Schema of tau.json."""
    kind: str
    param_names: List[str]
    params: List[float]
    solver: str
    converged: bool
    outer_iters: int
    inner_iterations: int
    total_time_s: float
    inner_time_fraction: float
    norm_factor: float
    ground_truth: Optional[List[float]] = None
    relative_error: Optional[float] = None


SCHEMA_MODELS: Dict[str, Type[BaseModel]] = {"tau": TauReport, "config": ConfigEcho}


def schema_path(name: str) -> Path:
    if name not in SCHEMA_MODELS:
        raise KeyError(f"No schema named {name!r}; known: {sorted(SCHEMA_MODELS)}")
    return SCHEMA_DIR / f"{name}.schema.json"


def load_schema(name: str) -> Dict[str, Any]:
    """The shipped JSON schema of ``<name>.json``."""
    with open(schema_path(name), "r", encoding="utf-8") as f:
        return json.load(f)


def export_schemas(directory: Union[str, Path]) -> List[Path]:
    """Write ``<name>.schema.json`` for every output document model."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for name, model in SCHEMA_MODELS.items():
        path = directory / f"{name}.schema.json"
        path.write_text(json.dumps(model.model_json_schema(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        written.append(path)
    logger.debug(f"Exported {len(written)} schemas to {directory}")
    return written


def validate_document(name: str, document: Dict[str, Any]) -> BaseModel:
    """Check an output document against its shipped schema and model.

    Raises:
        ValueError: if top-level keys are missing from or unknown to the schema
        pydantic.ValidationError: if a value does not fit the model
    """
    schema = load_schema(name)
    keys = set(document)
    missing = set(schema.get("required", [])) - keys
    unknown = keys - set(schema.get("properties", {}))
    if missing or unknown:
        raise ValueError(f"{name}.json: missing {sorted(missing)}, unknown {sorted(unknown)}")
    return SCHEMA_MODELS[name].model_validate(document)
