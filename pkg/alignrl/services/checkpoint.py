"""
Model checkpoints in the line-delimited container format.

Header: format version, ModelConfig, training step, seed and the dataset
facts inference needs (gamma, env id, r_max). Records: one named tensor per
line, flattened, with its shape.
"""
from pathlib import Path
from typing import Any, Dict, Iterator, Tuple, Union

import numpy as np
import torch
from pydantic import BaseModel, ValidationError

from alignrl.core.exceptions import DatasetParseError, VersionMismatchError
from alignrl.core.logging import get_logger
from alignrl.core.serialization import read_records, write_records
from alignrl.models.sequence_model import SequenceModel
from alignrl.schemas.model import ModelConfig

logger = get_logger(__name__)

CHECKPOINT_VERSION = 1

_DTYPES = {"float32": torch.float32, "float64": torch.float64}


class CheckpointInfo(BaseModel):
    """Checkpoint header fields other than the model config."""
    step: int = 0
    seed: int = 0
    gamma: float = 1.0
    env_id: str = ""
    r_max: float = 0.0
    dtype: str = "float32"


def _tensor_records(model: SequenceModel) -> Iterator[Dict[str, Any]]:
    for name, tensor in model.state_dict().items():
        values = tensor.detach().cpu()
        yield {
            "name": name,
            "shape": list(values.shape),
            "data": values.reshape(-1).tolist(),
        }


def save_checkpoint(model: SequenceModel, path: Union[str, Path], info: CheckpointInfo) -> None:
    """Write ``model`` with ``info`` to ``path``."""
    dtype_name = str(model.dtype).replace("torch.", "")
    info = info.model_copy(update={"dtype": dtype_name})
    header = {
        "format_version": CHECKPOINT_VERSION,
        "kind": "checkpoint",
        "model_config": model.config.model_dump(mode="json"),
        **info.model_dump(mode="json"),
    }
    write_records(path, header, _tensor_records(model))
    logger.info("Checkpoint saved", path=str(path), step=info.step)


def load_checkpoint(path: Union[str, Path]) -> Tuple[SequenceModel, CheckpointInfo]:
    """
    Rebuild the model stored at ``path`` in evaluation mode.

    Raises:
        ArtifactIOError: If the file is missing or unreadable
        VersionMismatchError: If the header declares another format version
        DatasetParseError: If the header is invalid or a tensor is missing,
            unknown or mis-shaped for the stored config
    """
    header, records = read_records(path)
    if header.get("format_version") != CHECKPOINT_VERSION:
        raise VersionMismatchError(header.get("format_version"), CHECKPOINT_VERSION)
    if header.get("kind") != "checkpoint":
        raise DatasetParseError(f"not a checkpoint (kind={header.get('kind')!r})")
    try:
        config = ModelConfig.model_validate(header.get("model_config") or {})
        info = CheckpointInfo.model_validate({k: v for k, v in header.items() if k in CheckpointInfo.model_fields})
    except ValidationError as exc:
        raise DatasetParseError(f"invalid checkpoint header: {exc.errors()[0]['msg']}") from exc
    dtype = _DTYPES.get(info.dtype)
    if dtype is None:
        raise DatasetParseError(f"unsupported checkpoint dtype {info.dtype!r}")

    model = SequenceModel(config).to(dtype)
    expected = model.state_dict()
    state: Dict[str, torch.Tensor] = {}
    for index, record in records:
        name = record.get("name")
        if name not in expected:
            raise DatasetParseError(f"unexpected tensor {name!r}", record_index=index)
        shape = tuple(record.get("shape", ()))
        if shape != tuple(expected[name].shape):
            raise DatasetParseError(
                f"tensor {name!r} has shape {shape}, config expects {tuple(expected[name].shape)}",
                record_index=index,
            )
        data = np.asarray(record.get("data", []), dtype=np.float64)
        if data.size != int(np.prod(shape, dtype=np.int64)):
            raise DatasetParseError(f"tensor {name!r} holds {data.size} values for shape {shape}", record_index=index)
        state[name] = torch.as_tensor(data.reshape(shape), dtype=expected[name].dtype)

    missing = sorted(set(expected) - set(state))
    if missing:
        raise DatasetParseError(f"checkpoint is missing tensors {missing}", record_index=len(state))
    model.load_state_dict(state)
    model.eval()
    logger.debug("Checkpoint loaded", path=str(path), step=info.step, parameters=len(state))
    return model, info
