"""
Training and evaluation harness: sequence windows over on-disk datasets,
seeded augmentation, dataset mixing, the optimizer loop with best-checkpoint
selection, and the evaluation driver.
"""
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch

from logging_config import log_training_error
from ..class_mapping import ClassMapping, get_mapping, map_classes
from ..errors import ConfigError, ContractError, DatasetLoadError, DivergenceError, ShapeError
from ..geometry.camera import relative_transform
from ..metrics import DepthAccumulator, SegAccumulator
from ..models import (
    AugmentConfig, CameraIntrinsics, DepthMetrics, FrameSample,
    SegMetrics, SequenceSample, TrainConfig,
)
from ..network.config import ArchConfig, canonical_json
from ..network.joint import JointDepthSegNet, JointOutput
from ..objectives import LossLogger, depth_loss, joint_loss, semantic_loss
from ..utils.augment import augment
from ..utils.sampling import DATASET_A, DATASET_B, MixSampler
from ..utils.timing import InferenceTimer
from . import dataset_service as datasets
from .checkpoint_service import Checkpoint, checkpoint_fingerprint, checkpoint_service

logger = logging.getLogger(__name__)

TRAINING_LOG_NAME = 'training_log.csv'
CONFIG_NAME = 'config.json'
GRID_FRAMES = 4


# ============================================================================
# SEQUENCE DATA
# ============================================================================

class SequenceDataset:
    """
    Windows of n consecutive frames inside each trajectory. Window k ends at
    frame n-1+k of its trajectory; the last frame's ground truth supervises.
    """

    def __init__(self, samples: Sequence[FrameSample], sequence_length: int, name: str = ''):
        if sequence_length < 1:
            raise ConfigError("Sequence length must be at least 1")
        self.name = name
        self.sequence_length = sequence_length
        self.trajectories: Dict[int, List[FrameSample]] = {}
        for sample in samples:
            self.trajectories.setdefault(int(sample.trajectory_id), []).append(sample)
        self.windows: List[Tuple[int, int]] = []
        for trajectory_id, frames in sorted(self.trajectories.items()):
            frames.sort(key=lambda s: s.frame_index)
            if len(frames) < sequence_length:
                logger.warning(f"Trajectory {trajectory_id} of {name or 'dataset'} has {len(frames)} frames, "
                               f"fewer than the sequence length {sequence_length}; skipped")
                continue
            self.windows.extend((trajectory_id, end) for end in range(sequence_length - 1, len(frames)))
        if not self.windows:
            raise DatasetLoadError(f"Dataset {name or ''} yields no sequences of length {sequence_length}".strip())

        intrinsics = {frames[0].intrinsics for frames in self.trajectories.values()}
        if len(intrinsics) != 1:
            raise ConfigError(f"Trajectories of {name or 'the dataset'} use different intrinsics")
        self.intrinsics: CameraIntrinsics = intrinsics.pop()
        self.max_depth = float(samples[0].depth.max_depth)

    @classmethod
    def from_root(cls, root: str, sequence_length: int) -> 'SequenceDataset':
        return cls(datasets.read_dataset(root), sequence_length, name=root)

    def __len__(self):
        return len(self.windows)

    def frames(self, index: int) -> List[FrameSample]:
        trajectory_id, end = self.windows[index]
        frames = self.trajectories[trajectory_id]
        return frames[end - self.sequence_length + 1:end + 1]

    def sample(self, index: int) -> SequenceSample:
        frames = self.frames(index)
        return sequence_from_frames(frames)


def sequence_from_frames(frames: Sequence[FrameSample]) -> SequenceSample:
    """Motions relative_transform(pose_{k-1}, pose_k) between consecutive frames"""
    motions = [relative_transform(previous.pose, current.pose) for previous, current in zip(frames, frames[1:])]
    last = frames[-1]
    return SequenceSample(
        rgb=[f.rgb for f in frames],
        depth=[f.depth.values for f in frames],
        seg=[f.seg for f in frames],
        motions=motions,
        intrinsics=last.intrinsics,
        max_depth=last.depth.max_depth,
        trajectory_id=last.trajectory_id,
        frame_index=last.frame_index,
    )


@dataclass
class Batch:
    frames: torch.Tensor
    rotations: torch.Tensor
    translations: torch.Tensor
    depth: torch.Tensor
    seg: torch.Tensor
    intrinsics: CameraIntrinsics
    max_depth: float


def collate_sequences(samples: Sequence[SequenceSample], dtype=torch.float32, device='cpu',
                      label_mapping: Optional[ClassMapping] = None) -> Batch:
    """Stack sequences into (B, n, 3, H, W) frames; depth and seg targets come from the last frame"""
    intr = samples[0].intrinsics
    if any(s.intrinsics != intr for s in samples):
        raise ConfigError("All sequences of a batch must share intrinsics")
    if len({len(s) for s in samples}) != 1:
        raise ShapeError("All sequences of a batch must have the same length")

    frames = np.stack([np.stack(s.rgb) for s in samples]).astype(np.float64) / 255.0
    frames = torch.as_tensor(frames, dtype=dtype).permute(0, 1, 4, 2, 3)
    motion_count = len(samples[0]) - 1
    if motion_count:
        rotations = np.stack([np.stack([m.rotation for m in s.motions]) for s in samples])
        translations = np.stack([np.stack([m.translation for m in s.motions]) for s in samples])
    else:
        rotations = np.zeros((len(samples), 0, 3, 3))
        translations = np.zeros((len(samples), 0, 3))
    depth = np.stack([s.depth[-1] for s in samples])[:, None]
    seg = np.stack([s.seg[-1] if label_mapping is None else map_classes(s.seg[-1], label_mapping)
                    for s in samples]).astype(np.int64)
    return Batch(
        frames=frames.contiguous().to(device),
        rotations=torch.as_tensor(rotations, dtype=dtype, device=device),
        translations=torch.as_tensor(translations, dtype=dtype, device=device),
        depth=torch.as_tensor(depth, dtype=dtype, device=device),
        seg=torch.as_tensor(seg, device=device),
        intrinsics=intr,
        max_depth=samples[0].max_depth,
    )


def run_model(model: JointDepthSegNet, batch: Batch) -> JointOutput:
    return model(batch.frames, batch.rotations, batch.translations, batch.intrinsics)


# ============================================================================
# EVALUATION
# ============================================================================

@dataclass
class EvaluationResult:
    depth: Optional[DepthMetrics]
    seg: Optional[SegMetrics]
    frames: int
    max_depth_cap: float
    per_trajectory: Dict[int, Dict] = field(default_factory=dict)
    ms_per_frame: float = 0.0
    relative_errors: Optional[np.ndarray] = None
    timing: Dict = field(default_factory=dict)

    def to_dict(self) -> Dict:
        return {
            'depth': self.depth.to_dict() if self.depth is not None else None,
            'seg': self.seg.to_dict() if self.seg is not None else None,
            'frames': self.frames,
            'max_depth_cap': self.max_depth_cap,
            'per_trajectory': {str(k): v for k, v in self.per_trajectory.items()},
            'ms_per_frame': self.ms_per_frame,
            'timing': dict(self.timing),
        }


def evaluate_model(model: JointDepthSegNet, dataset: SequenceDataset, max_depth_cap: float,
                   label_mapping: Optional[ClassMapping] = None, per_trajectory: bool = True,
                   grid_path: Optional[str] = None, device='cpu') -> EvaluationResult:
    """
    Score every window of `dataset` one at a time with pooled metrics. Sequences
    run with batch size 1 so results do not depend on batching.
    """
    arch = model.arch
    dtype = next(model.parameters()).dtype
    depth_total = DepthAccumulator(max_depth_cap) if arch.has_depth else None
    seg_total = SegAccumulator(arch.num_classes) if arch.has_semantic else None
    breakdown: Dict[int, Tuple[Optional[DepthAccumulator], Optional[SegAccumulator]]] = {}
    timer = InferenceTimer()
    grid_rows = []

    model.eval()
    with torch.no_grad():
        for index in range(len(dataset)):
            sequence = dataset.sample(index)
            batch = collate_sequences([sequence], dtype, device, label_mapping)
            with timer:
                output = run_model(model, batch)
            gt_depth = batch.depth[0, 0].cpu().double().numpy()
            gt_seg = batch.seg[0].cpu().numpy()
            if per_trajectory and sequence.trajectory_id not in breakdown:
                breakdown[sequence.trajectory_id] = (
                    DepthAccumulator(max_depth_cap) if arch.has_depth else None,
                    SegAccumulator(arch.num_classes) if arch.has_semantic else None,
                )
            pred_depth = output.depth[0, 0].cpu().double().numpy() if arch.has_depth else None
            pred_seg = output.seg_classes(0) if arch.has_semantic else None
            if pred_depth is not None:
                depth_total.add(pred_depth, gt_depth)
                if per_trajectory:
                    breakdown[sequence.trajectory_id][0].add(pred_depth, gt_depth)
            if pred_seg is not None:
                seg_total.add(pred_seg, gt_seg)
                if per_trajectory:
                    breakdown[sequence.trajectory_id][1].add(pred_seg, gt_seg)
            if grid_path and len(grid_rows) < GRID_FRAMES:
                grid_rows.append({'rgb': sequence.rgb[-1], 'gt_depth': gt_depth, 'pred_depth': pred_depth,
                                  'gt_seg': gt_seg, 'pred_seg': pred_seg})

    result = EvaluationResult(
        depth=depth_total.result() if depth_total is not None else None,
        seg=seg_total.result() if seg_total is not None else None,
        frames=len(dataset),
        max_depth_cap=float(max_depth_cap),
        ms_per_frame=timer.ms_per_frame,
        relative_errors=depth_total.relative_errors() if depth_total is not None else None,
        timing=timer.summary(),
    )
    for trajectory_id, (depth_acc, seg_acc) in sorted(breakdown.items()):
        result.per_trajectory[trajectory_id] = {
            'depth': depth_acc.result().to_dict() if depth_acc is not None else None,
            'seg': seg_acc.result().to_dict() if seg_acc is not None else None,
        }
    if grid_path and grid_rows:
        from .report_service import save_prediction_grid
        save_prediction_grid(grid_path, grid_rows, min(max_depth_cap, dataset.max_depth))
    return result


# ============================================================================
# TRAINING
# ============================================================================

@dataclass
class EpochRecord:
    epoch: int
    loss: float
    learning_rate: float
    depth: Optional[DepthMetrics]
    seg: Optional[SegMetrics]


@dataclass
class TrainingResult:
    best: Checkpoint
    last: Checkpoint
    history: List[EpochRecord]
    step_losses: List[float]
    run_dir: str
    checkpoint_paths: List[str] = field(default_factory=list)


def _state_copy(model: torch.nn.Module) -> Dict[str, torch.Tensor]:
    return {k: v.detach().cpu().clone() for k, v in model.state_dict().items()}


class TrainingService:
    """Runs training and evaluation against on-disk datasets"""

    def __init__(self, app=None):
        self.app = app
        self.device = 'cpu'
        self.num_workers = 0
        self.eval_caps = {'cap80': 80.0, 'cap200': 200.0}

        if app:
            self.init_app(app)

    def init_app(self, app):
        self.app = app
        self.device = app.config.get('DEVICE', 'cpu')
        self.num_workers = int(app.config.get('NUM_WORKERS', 0))
        self.eval_caps = dict(app.config.get('EVAL_CAPS', self.eval_caps))

    def mix_sampler(self, root_a: str, root_b: Optional[str] = None, ratio: str = '1:1',
                    epoch_size: Optional[int] = None, sequence_length: int = 3, seed: int = 0):
        """Datasets for both roots plus the interleaving sampler over their windows"""
        dataset_a = SequenceDataset.from_root(root_a, sequence_length)
        dataset_b = SequenceDataset.from_root(root_b, sequence_length) if root_b else None
        if dataset_b is not None and dataset_b.intrinsics != dataset_a.intrinsics:
            raise ConfigError(f"Mixed datasets {root_a} and {root_b} use different intrinsics")
        if dataset_b is None:
            ratio = '1:0'
        sampler = MixSampler(len(dataset_a), len(dataset_b) if dataset_b else 0, ratio, seed, epoch_size)
        return dataset_a, dataset_b, sampler

    def _build_samples(self, picks, datasets_by_source, augment_config: AugmentConfig, seed: int, epoch: int,
                       batch_index: int) -> List[SequenceSample]:
        geometric = replace(augment_config, color_jitter=False)
        photometric = replace(augment_config, rotation=False, flip=False)

        def build(item):
            position, (source, index) = item
            sample = datasets_by_source[source].sample(index)
            # one geometric draw per batch, photometric draws per sample
            sample = augment(sample, geometric, np.random.default_rng([seed, epoch, batch_index]))
            return augment(sample, photometric, np.random.default_rng([seed, epoch, batch_index, position + 1]))

        items = list(enumerate(picks))
        if self.num_workers > 1 and len(items) > 1:
            with ThreadPoolExecutor(max_workers=self.num_workers) as pool:
                return list(pool.map(build, items))
        return [build(item) for item in items]

    def train(self, config: TrainConfig, train_roots: Union[str, Sequence[str]], val_root: Optional[str],
              out_dir: str, arch: Optional[ArchConfig] = None, dtype=torch.float32) -> TrainingResult:
        """
        Train with Adam and validate after every epoch. The initialization is
        validated as epoch 0, so epochs=0 returns it as the only checkpoint.

        Raises:
            DivergenceError: a non-finite loss; best.pt and last.pt keep the last good state
        """
        roots = [train_roots] if isinstance(train_roots, str) else list(train_roots)
        if not roots or len(roots) > 2:
            raise ConfigError("Training takes one or two dataset roots")
        root_b = roots[1] if len(roots) == 2 else (config.mix.root_b if config.mix else None)
        ratio = config.mix.ratio if config.mix else '1:1'

        torch.manual_seed(config.seed)
        dataset_a, dataset_b, sampler = self.mix_sampler(roots[0], root_b, ratio, config.epoch_size,
                                                         config.sequence_length, config.seed)
        validation = SequenceDataset.from_root(val_root, config.sequence_length) if val_root else \
            SequenceDataset(
                [f for frames in dataset_a.trajectories.values() for f in frames], config.sequence_length, roots[0])

        if arch is None:
            arch = ArchConfig(sequence_length=config.sequence_length, max_depth=dataset_a.max_depth)
        if arch.sequence_length != config.sequence_length:
            raise ConfigError(f"Architecture expects sequences of {arch.sequence_length} frames, "
                              f"training config has {config.sequence_length}")
        height, width = dataset_a.intrinsics.shape
        if height % arch.divisor or width % arch.divisor:
            raise ShapeError(f"Input {height}x{width} is not divisible by {arch.divisor} "
                             f"for a {arch.num_levels}-level network")

        model = JointDepthSegNet(arch).to(dtype).to(self.device)
        optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate, betas=config.betas)
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, CONFIG_NAME), 'w') as handle:
            handle.write(canonical_json({
                'arch': arch.to_dict(),
                'train': config.to_dict(),
                'train_roots': roots[:1] + ([root_b] if root_b else []),
                'val_root': val_root,
                'fingerprint': checkpoint_fingerprint(arch, config),
            }) + '\n')

        datasets_by_source = {DATASET_A: dataset_a, DATASET_B: dataset_b}
        history: List[EpochRecord] = []
        step_losses: List[float] = []
        paths: List[str] = []

        def checkpoint_for(epoch: int, loss: float, lr: float) -> Checkpoint:
            result = evaluate_model(model, validation, config.max_depth_cap, per_trajectory=False,
                                    device=self.device)
            history.append(EpochRecord(epoch, loss, lr, result.depth, result.seg))
            return Checkpoint(arch=arch, state_dict=_state_copy(model), epoch=epoch, train_config=config,
                              depth_metrics=result.depth, seg_metrics=result.seg)

        last = checkpoint_for(0, float('nan'), config.learning_rate)
        best = last
        paths = checkpoint_service.save_run(out_dir, last, best)
        logger.info(f"Training {arch.tasks} model on {len(dataset_a)} sequences from {roots[0]}"
                    + (f" mixed with {len(dataset_b)} from {root_b} at {ratio}" if dataset_b else ''))

        step = 0
        with LossLogger(os.path.join(out_dir, TRAINING_LOG_NAME), leading=['epoch'], trailing=['lr']) as log:
            for epoch in range(1, config.epochs + 1):
                lr = config.learning_rate
                if config.lr_drop_epoch is not None and epoch >= config.lr_drop_epoch:
                    lr *= config.lr_drop_factor
                for group in optimizer.param_groups:
                    group['lr'] = lr

                sampler.set_epoch(epoch)
                order = list(sampler)
                epoch_losses = []
                model.train()
                for batch_index, start in enumerate(range(0, len(order), config.batch_size)):
                    picks = order[start:start + config.batch_size]
                    samples = self._build_samples(picks, datasets_by_source, config.augment, config.seed,
                                                  epoch, batch_index)
                    batch = collate_sequences(samples, dtype, self.device)
                    output = run_model(model, batch)
                    depth_terms = depth_loss(output.depth_levels, batch.depth, config.include_sky,
                                             batch.max_depth) if arch.has_depth else None
                    semantic_terms = semantic_loss(output.seg_levels, batch.seg) if arch.has_semantic else None
                    breakdown = joint_loss(depth_terms, semantic_terms, config.loss_weight)

                    loss_value = float(breakdown.total)
                    if not math.isfinite(loss_value):
                        message = (f"Non-finite loss {loss_value} at epoch {epoch}, step {step}; "
                                   f"keeping checkpoint of epoch {last.epoch} in {out_dir}")
                        log_training_error(message)
                        raise DivergenceError(message)

                    optimizer.zero_grad(set_to_none=True)
                    breakdown.total.backward()
                    optimizer.step()
                    step += 1
                    step_losses.append(loss_value)
                    epoch_losses.append(loss_value)
                    log.log(step, breakdown, leading=[epoch], trailing=[lr])

                mean_loss = float(np.mean(epoch_losses)) if epoch_losses else float('nan')
                last = checkpoint_for(epoch, mean_loss, lr)
                if checkpoint_service.better(last, best):
                    best = last
                paths = checkpoint_service.save_run(out_dir, last, best, config.keep_all_checkpoints)
                record = history[-1]
                logger.info(f"Epoch {epoch}: loss {mean_loss:.4f}"
                            + (f", mIoU {record.seg.miou:.4f}" if record.seg else '')
                            + (f", RMSE {record.depth.rmse:.4f}" if record.depth else ''))

        logger.info(f"Training finished; best checkpoint from epoch {best.epoch}")
        return TrainingResult(best=best, last=last, history=history, step_losses=step_losses, run_dir=out_dir,
                              checkpoint_paths=paths)

    def resolve_cap(self, protocol: Union[str, float]) -> float:
        if isinstance(protocol, (int, float)):
            return float(protocol)
        key = str(protocol)
        if key.isdigit():
            key = f"cap{key}"
        if key not in self.eval_caps:
            raise ConfigError(f"Unknown evaluation protocol '{protocol}'; choose from {sorted(self.eval_caps)}")
        return float(self.eval_caps[key])

    def evaluate(self, checkpoint_path: str, dataset_root: str, protocol: Union[str, float] = 'cap80',
                 label_map: Optional[str] = None, out_dir: Optional[str] = None,
                 expected_fingerprint: Optional[str] = None) -> EvaluationResult:
        """
        Load a checkpoint under its fingerprint and score it on a whole split,
        with a per-trajectory breakdown and, when `out_dir` is given, a
        qualitative prediction grid.
        """
        checkpoint = checkpoint_service.load(checkpoint_path, expected_fingerprint)
        mapping = get_mapping(label_map) if label_map else None
        if mapping is not None and len(mapping.target_names) != checkpoint.arch.num_classes:
            raise ConfigError(f"Class mapping '{mapping.name}' yields {len(mapping.target_names)} classes, "
                              f"the checkpoint predicts {checkpoint.arch.num_classes}")
        cap = self.resolve_cap(protocol)
        model = checkpoint.build_model().to(self.device)
        dataset = SequenceDataset.from_root(dataset_root, checkpoint.arch.sequence_length)
        grid_path = os.path.join(out_dir, 'qualitative_grid.png') if out_dir else None
        result = evaluate_model(model, dataset, cap, mapping, per_trajectory=True, grid_path=grid_path,
                                device=self.device)
        logger.info(f"Evaluated {checkpoint_path} on {dataset_root} ({len(dataset)} sequences, cap {cap:g} m)")
        return result

    def predict(self, checkpoint_path: str, dataset_root: str, frame_index: int,
                trajectory_id: Optional[int] = None) -> Tuple[FrameSample, JointOutput, Checkpoint]:
        """
        Predict the frame `frame_index` from it and up to n-1 preceding frames
        of its trajectory.
        """
        checkpoint = checkpoint_service.load(checkpoint_path)
        arch = checkpoint.arch
        trajectory_ids = datasets.list_trajectories(dataset_root)
        if not trajectory_ids:
            raise DatasetLoadError(f"Dataset root {dataset_root} holds no trajectories")
        trajectory_id = trajectory_ids[0] if trajectory_id is None else trajectory_id
        if trajectory_id not in trajectory_ids:
            raise DatasetLoadError(f"Trajectory {trajectory_id} not found in {dataset_root}")
        frames = datasets.read_trajectory(dataset_root, trajectory_id)
        positions = {f.frame_index: k for k, f in enumerate(frames)}
        if frame_index not in positions:
            raise DatasetLoadError(f"Frame {frame_index} not found in trajectory {trajectory_id}")
        end = positions[frame_index]
        window = frames[max(0, end - arch.sequence_length + 1):end + 1]
        if arch.has_depth and len(window) < 2:
            raise ContractError(f"Depth prediction for frame {frame_index} needs at least one earlier frame")

        model = checkpoint.build_model().to(self.device)
        batch = collate_sequences([sequence_from_frames(window)], next(model.parameters()).dtype, self.device)
        with torch.no_grad():
            output = run_model(model, batch)
        return window[-1], output, checkpoint


training_service = TrainingService()
