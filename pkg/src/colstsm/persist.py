"""Self-describing text checkpoints with exact float64 round trips."""

import json

import numpy as np

from .cells import Model, param_shapes
from .synthdata import format_matrix

CKPT_VERSION = "colstsm-ckpt-v1"


class CheckpointError(ValueError):
    pass


def _tensor_block(tensors):
    items = []
    for name, arr in tensors.items():
        flat = np.asarray(arr, dtype=np.float64).reshape(-1)
        items.append(f'    {json.dumps(name)}: {{"shape": {json.dumps(list(arr.shape))}, '
                     f'"values": {format_matrix(flat)}}}')
    return "{\n" + ",\n".join(items) + "\n  }"


def dumps_checkpoint(model, opt_state=None, config=None):
    parts = [
        f'  "version": {json.dumps(CKPT_VERSION)}',
        f'  "family": {json.dumps(model.family)}',
        f'  "dims": {json.dumps(model.dims, sort_keys=True)}',
        f'  "compat_tanh": {json.dumps(bool(model.compat_tanh))}',
        f'  "params": {_tensor_block(model.params)}',
        f'  "opt": {_tensor_block(opt_state.velocity) if opt_state is not None else "null"}',
        f'  "config": {json.dumps(config, sort_keys=True)}',
    ]
    return "{\n" + ",\n".join(parts) + "\n}\n"


def save_checkpoint(model, path, opt_state=None, config=None):
    """``config`` is any JSON-serialisable mapping (usually ``TrainConfig.to_dict()``)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_checkpoint(model, opt_state, config))


def _read_tensors(block, shapes, what):
    if not isinstance(block, dict):
        raise CheckpointError(f"{what}: expected a mapping of tensors")
    out = {}
    for name, shape in shapes.items():
        if name not in block:
            raise CheckpointError(f"{what}: missing tensor {name!r}")
        entry = block[name]
        declared = tuple(entry.get("shape", ()))
        if declared != shape:
            raise CheckpointError(f"{what}: tensor {name!r} has shape {declared}, expected {shape}")
        values = np.asarray(entry.get("values", []), dtype=np.float64)
        if values.size != int(np.prod(shape)):
            raise CheckpointError(
                f"{what}: tensor {name!r} holds {values.size} values, shape {shape} needs {int(np.prod(shape))}")
        out[name] = values.reshape(shape)
    extra = sorted(set(block) - set(shapes))
    if extra:
        raise CheckpointError(f"{what}: unexpected tensors {extra}")
    return out


def loads_checkpoint(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"malformed checkpoint: {exc}") from None
    version = doc.get("version")
    if version != CKPT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version!r} (expected {CKPT_VERSION!r})")
    family = doc.get("family")
    try:
        shapes = param_shapes(family, doc["dims"])
    except (KeyError, ValueError, TypeError) as exc:
        raise CheckpointError(f"bad family/dims: {exc}") from None
    params = _read_tensors(doc.get("params"), shapes, "params")
    model = Model(family, dict(doc["dims"]), params, bool(doc.get("compat_tanh", False)))
    opt = None
    if doc.get("opt") is not None:
        from .trainer import OptState

        opt = OptState(_read_tensors(doc["opt"], shapes, "opt"))
    return model, opt, doc.get("config")


def load_checkpoint(path):
    """Returns ``(model, opt_state_or_None, config_dict_or_None)``."""
    with open(path, encoding="utf-8") as fh:
        return loads_checkpoint(fh.read())
