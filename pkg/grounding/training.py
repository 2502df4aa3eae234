"""
Iterative learning of the video module.

For every outer iteration and every neck index the video set is shuffled
and split into batches; each batch is trained against the current pseudo
labels of that neck index, and the labels are then refreshed from the
learned frame features. The language model is frozen here.
"""

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
import torch

from .checkpoints import Checkpoint, load_module, module_tensors, save_checkpoint
from .exceptions import CheckpointError, TrainingDivergedError
from .losses import loss_cls, loss_sab, loss_trip, loss_video
from .pseudo_labels import PseudoLabelStore, compute_labels
from .video import VideoGroundingModel, compose_activity

logger = logging.getLogger(__name__)

HISTORY_COLUMNS = ['iteration', 'neck', 'step', 'cls', 'sab', 'trip', 'total']
METRIC_COLUMNS = ['iteration', 'neck', 'cls', 'sab', 'trip', 'total', 'change_rate', 'trip_skipped']


@dataclass
class TrainState:
    """
    Position in the (iteration, neck) grid plus everything needed to resume
    from it. ``snapshots[l]`` is the label store after outer iteration l
    (0 = initial labels from raw features).
    """
    labels: PseudoLabelStore
    rng: np.random.Generator
    optimizer: torch.optim.Optimizer
    completed_blocks: int = 0
    history: list = field(default_factory=list)
    metrics: list = field(default_factory=list)
    snapshots: dict = field(default_factory=dict)

    def position(self, num_necks):
        """1-based iteration and 0-based neck index of the next block."""
        return self.completed_blocks // num_necks + 1, self.completed_blocks % num_necks


@dataclass
class TrainingResult:
    model: VideoGroundingModel
    labels: PseudoLabelStore
    history: pd.DataFrame
    metrics: pd.DataFrame
    snapshots: dict
    checkpoint: Checkpoint


def majority_foreground(labels):
    """Frames that at least half of the center rows mark positive."""
    labels = np.asarray(labels)
    return labels.mean(axis=0) >= 0.5


def batch_splits(count, videos_per_batch, rng):
    """Shuffled order split into max(1, count // Z) near-equal batches."""
    order = rng.permutation(count)
    return np.array_split(order, max(1, count // videos_per_batch))


def video_batch_loss(model, batch, centers, labels, sampled, config):
    """
    L_v of one batch for one neck index.

    ``batch`` holds FrameFeatureSequences, ``labels`` their (N_c, T) label
    matrices, ``sampled`` the J center indices drawn for the specific
    attention branch. Returns ``(VideoLoss, skipped)`` where ``skipped``
    counts videos whose labels leave the triplet loss undefined.
    """
    cls_total, trip_total, skipped = 0.0, 0.0, 0
    positives, negatives = [], []
    for video, matrix in zip(batch, labels):
        outputs = model(video.features, centers)
        target = torch.as_tensor(matrix, dtype=outputs.encoded.dtype)
        cls_total = cls_total + loss_cls(outputs.attention.positive, outputs.foreground.probabilities, target)
        trip, used = loss_trip(outputs.foreground.features, majority_foreground(matrix), config.tau3)
        trip_total = trip_total + trip
        skipped += not used
        positives.append(torch.stack([compose_activity(outputs.attention, outputs.encoded, j) for j in sampled]))
        negatives.append(torch.stack([compose_activity(outputs.attention, outputs.encoded, j, 'negative')
                                      for j in sampled]))
    sab = loss_sab(torch.stack(positives, dim=1), torch.stack(negatives, dim=1),
                   config.tau1, config.tau2, config.theta)
    return loss_video(cls_total, sab, trip_total, config), skipped


@torch.no_grad()
def encode_videos(model, videos):
    return [model.encode(video.features).double().numpy() for video in videos]


@torch.no_grad()
def refresh_labels(model, videos, centers, config):
    """New (N_c, T) label matrices for one neck index from the learned F-hat."""
    projected = model.project_centers(centers).double().numpy()
    return compute_labels(videos, centers, config.ncut_sigma or None, encoded=encode_videos(model, videos),
                          projected_centers=projected, n_jobs=config.workers)


def initial_labels(videos, bank, config):
    store = PseudoLabelStore()
    for neck in range(bank.num_necks):
        matrices = compute_labels(videos, bank.centers[neck], config.ncut_sigma or None, n_jobs=config.workers)
        for video, matrix in zip(videos, matrices):
            store[(neck, video.video_id)] = matrix
    return store


def _store_tensors(prefix, store):
    return {f'{prefix}.{neck}.{video_id}': matrix for (neck, video_id), matrix in sorted(store.labels.items())}


def _store_from(arrays):
    store = PseudoLabelStore()
    for name, matrix in arrays.items():
        neck, video_id = name.split('.', 1)
        store[(int(neck), video_id)] = matrix
    return store


def make_checkpoint(model, state, config, language_model=None):
    tensors = module_tensors('video', model)
    if language_model is not None:
        tensors.update(module_tensors('language', language_model))
    optimizer = state.optimizer.state_dict()
    for index, values in sorted(optimizer['state'].items()):
        for key, value in values.items():
            tensors[f'optim.{index}.{key}'] = torch.as_tensor(value).detach().cpu().numpy().copy()
    tensors.update(_store_tensors('labels', state.labels))
    for iteration, snapshot in sorted(state.snapshots.items()):
        tensors.update(_store_tensors(f'snapshot.{iteration}', snapshot))
    tensors['rng.torch'] = torch.get_rng_state().numpy().copy()
    bookkeeping = {
        'completed_blocks': state.completed_blocks,
        'numpy_rng': state.rng.bit_generator.state,
        'param_groups': optimizer['param_groups'],
        'history': state.history,
        'metrics': state.metrics,
        'feature_dim': model.feature_dim,
    }
    iteration = state.completed_blocks // config.num_necks
    # JSON round trip so an in-memory checkpoint equals its reloaded copy.
    bookkeeping = json.loads(json.dumps(bookkeeping))
    return Checkpoint(tensors, iteration, config.as_dict(), bookkeeping)


def restore_state(checkpoint, model, config):
    """Load the model in place and rebuild the TrainState a checkpoint was taken from."""
    if checkpoint.config.get('num_necks') != config.num_necks:
        raise CheckpointError('checkpoint was written with a different neck count')
    load_module(model, checkpoint, 'video')
    optimizer = torch.optim.Adam(model.parameters(), lr=config.video_lr)
    moments = {}
    for name, value in checkpoint.section('optim').items():
        index, key = name.split('.', 1)
        moments.setdefault(int(index), {})[key] = torch.from_numpy(np.array(value))
    optimizer.load_state_dict({'state': moments, 'param_groups': checkpoint.state['param_groups']})

    rng = np.random.default_rng()
    rng.bit_generator.state = checkpoint.state['numpy_rng']
    torch.set_rng_state(torch.from_numpy(np.array(checkpoint.tensors['rng.torch'])))

    snapshots = {}
    for name, matrix in checkpoint.section('snapshot').items():
        iteration, rest = name.split('.', 1)
        snapshots.setdefault(int(iteration), {})[rest] = matrix
    return TrainState(
        labels=_store_from(checkpoint.section('labels')),
        rng=rng,
        optimizer=optimizer,
        completed_blocks=checkpoint.state['completed_blocks'],
        history=list(checkpoint.state['history']),
        metrics=list(checkpoint.state['metrics']),
        snapshots={iteration: _store_from(arrays) for iteration, arrays in snapshots.items()},
    )


def _train_block(model, state, videos, centers, neck, iteration, config):
    sums = {'cls': 0.0, 'sab': 0.0, 'trip': 0.0, 'total': 0.0}
    batches = batch_splits(len(videos), config.videos_per_batch, state.rng)
    skipped = 0
    for step, batch in enumerate(batches, start=1):
        members = [videos[k] for k in batch]
        sampled = state.rng.choice(len(centers), size=config.centers_per_batch, replace=False)
        labels = [state.labels[(neck, video.video_id)] for video in members]
        loss, missing = video_batch_loss(model, members, centers, labels, sampled, config)
        if not math.isfinite(float(loss.total)):
            raise TrainingDivergedError(f'video loss became non-finite at iteration {iteration}, neck {neck}',
                                        [video.video_id for video in members])
        state.optimizer.zero_grad()
        (loss.total / len(members)).backward()
        state.optimizer.step()
        skipped += missing
        values = {k: v / len(members) for k, v in loss.as_floats().items()}
        state.history.append({'iteration': iteration, 'neck': neck, 'step': step, **values})
        for key in sums:
            sums[key] += values[key]

    previous = state.labels.copy()
    for video, matrix in zip(videos, refresh_labels(model, videos, centers, config)):
        state.labels[(neck, video.video_id)] = matrix
    change = state.labels.change_rate(previous, neck=neck)
    record = {'iteration': iteration, 'neck': neck, **{k: v / len(batches) for k, v in sums.items()},
              'change_rate': change, 'trip_skipped': skipped}
    state.metrics.append(record)
    logger.info('iteration %d neck %d: L_v=%.4f (cls=%.4f sab=%.4f trip=%.4f) labels changed %.2f%%',
                iteration, neck, record['total'], record['cls'], record['sab'], record['trip'], 100 * change)


def run_training(videos, bank, config, model=None, resume=None, language_model=None, checkpoint_path=None):
    """
    Run ``config.iterations`` outer iterations over all neck indices.

    ``resume`` continues from a Checkpoint; the remaining blocks replay
    exactly as the uninterrupted run would. With ``checkpoint_path`` and
    ``config.checkpoint_every`` > 0, intermediate checkpoints are written
    every that many blocks.
    """
    videos = list(videos)
    if not videos:
        raise ValueError('cannot train on an empty video set')
    if bank.num_necks != config.num_necks:
        raise ValueError(f'cluster bank has {bank.num_necks} neck indices, config expects {config.num_necks}')
    feature_dim = videos[0].dim
    torch.manual_seed(config.seed)
    if model is None:
        model = VideoGroundingModel(feature_dim, config)
    model.train()

    if resume is not None:
        state = restore_state(resume, model, config)
        logger.info('resuming after %d completed block(s)', state.completed_blocks)
    else:
        state = TrainState(
            labels=initial_labels(videos, bank, config),
            rng=np.random.default_rng(config.seed),
            optimizer=torch.optim.Adam(model.parameters(), lr=config.video_lr),
        )
        state.snapshots[0] = state.labels.copy()

    total_blocks = config.iterations * config.num_necks
    while state.completed_blocks < total_blocks:
        iteration, neck = state.position(config.num_necks)
        _train_block(model, state, videos, bank.centers[neck], neck, iteration, config)
        state.completed_blocks += 1
        if neck == config.num_necks - 1:
            state.snapshots[iteration] = state.labels.copy()
        if checkpoint_path and config.checkpoint_every and state.completed_blocks % config.checkpoint_every == 0:
            save_checkpoint(checkpoint_path, make_checkpoint(model, state, config, language_model))
            logger.info('checkpoint written after block %d', state.completed_blocks)

    return TrainingResult(
        model=model,
        labels=state.labels,
        history=pd.DataFrame(state.history, columns=HISTORY_COLUMNS),
        metrics=pd.DataFrame(state.metrics, columns=METRIC_COLUMNS),
        snapshots=state.snapshots,
        checkpoint=make_checkpoint(model, state, config, language_model),
    )


def model_from_checkpoint(checkpoint, config):
    model = VideoGroundingModel(checkpoint.state['feature_dim'], config)
    load_module(model, checkpoint, 'video')
    model.eval()
    return model


def write_metrics(path, metrics):
    metrics.to_csv(path, index=False)
