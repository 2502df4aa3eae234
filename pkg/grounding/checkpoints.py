"""Checkpoint persistence: named tensors plus iteration, config and RNG state."""

from dataclasses import dataclass, field

import numpy as np
import torch

from .containers import read_archive, write_archive
from .exceptions import CheckpointError, FeatureFileError

CHECKPOINT_VERSION = 2


@dataclass(eq=False)
class Checkpoint:
    """
    ``tensors`` holds every array by name (``language.*``, ``video.*``,
    ``optim.*``, ``labels.*``, ``rng.*``); ``state`` holds JSON-able
    bookkeeping (loss history, block position, numpy RNG state).
    """
    tensors: dict
    iteration: int = 0
    config: dict = field(default_factory=dict)
    state: dict = field(default_factory=dict)

    def __eq__(self, other):
        if not isinstance(other, Checkpoint):
            return NotImplemented
        return (
            self.iteration == other.iteration
            and self.config == other.config
            and self.state == other.state
            and list(self.tensors) == list(other.tensors)
            and all(
                a.dtype == b.dtype and a.shape == b.shape and a.tobytes() == b.tobytes()
                for a, b in zip(self.tensors.values(), other.tensors.values())
            )
        )

    def section_items(self, prefix):
        return {name: value for name, value in self.tensors.items() if name.startswith(prefix + '.')}

    def section(self, prefix):
        """Tensors under ``prefix.`` with the prefix stripped."""
        start = len(prefix) + 1
        return {name[start:]: value for name, value in self.section_items(prefix).items()}


def module_tensors(prefix, module):
    return {f'{prefix}.{name}': value.detach().cpu().numpy().copy() for name, value in module.state_dict().items()}


def load_module(module, checkpoint, prefix):
    arrays = checkpoint.section(prefix)
    if not arrays:
        raise CheckpointError(f'checkpoint has no {prefix!r} parameters')
    module.load_state_dict({name: torch.from_numpy(np.array(value)) for name, value in arrays.items()})
    return module


def save_checkpoint(path, checkpoint):
    meta = {
        'kind': 'checkpoint',
        'checkpoint_version': CHECKPOINT_VERSION,
        'iteration': checkpoint.iteration,
        'config': checkpoint.config,
        'state': checkpoint.state,
    }
    write_archive(path, checkpoint.tensors, meta)


def load_checkpoint(path):
    try:
        tensors, meta = read_archive(path)
    except FeatureFileError as exc:
        raise CheckpointError(str(exc)) from exc
    version = meta.get('checkpoint_version')
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f'{path}: checkpoint version {version}, this build reads {CHECKPOINT_VERSION}')
    return Checkpoint(tensors, meta['iteration'], meta['config'], meta['state'])
