"""
Checkpoint container: model parameters plus the records needed to rebuild
and verify the model that produced them.
"""
import logging
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import torch

from ..errors import AerodepthError, FingerprintMismatchError
from ..models import DepthMetrics, SegMetrics, TrainConfig
from ..network.config import ArchConfig, fingerprint
from ..network.joint import JointDepthSegNet

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT_VERSION = 1
BEST_NAME = 'best.pt'
LAST_NAME = 'last.pt'


def checkpoint_fingerprint(arch: ArchConfig, train_config: Optional[TrainConfig] = None) -> str:
    """Fingerprint of the producing configuration"""
    return fingerprint({
        'arch': arch.to_dict(),
        'train': train_config.to_dict() if train_config is not None else None,
    })


@dataclass
class Checkpoint:
    arch: ArchConfig
    state_dict: Dict[str, torch.Tensor]
    epoch: int
    train_config: Optional[TrainConfig] = None
    depth_metrics: Optional[DepthMetrics] = None
    seg_metrics: Optional[SegMetrics] = None
    fingerprint: str = ''
    extra: Dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.fingerprint:
            self.fingerprint = checkpoint_fingerprint(self.arch, self.train_config)

    def build_model(self, dtype=torch.float32) -> JointDepthSegNet:
        model = JointDepthSegNet(self.arch).to(dtype)
        model.load_state_dict(self.state_dict)
        model.eval()
        return model

    def selection_key(self):
        """Ordering for best-checkpoint selection: higher mIoU first, then lower RMSE"""
        miou = self.seg_metrics.miou if self.seg_metrics is not None else float('-inf')
        rmse = self.depth_metrics.rmse if self.depth_metrics is not None else float('inf')
        if miou != miou:
            miou = float('-inf')
        if rmse != rmse:
            rmse = float('inf')
        return miou, -rmse

    def to_record(self) -> Dict:
        return {
            'format_version': CHECKPOINT_FORMAT_VERSION,
            'arch': self.arch.to_dict(),
            'train': self.train_config.to_dict() if self.train_config is not None else None,
            'state_dict': {k: v.detach().cpu().clone() for k, v in self.state_dict.items()},
            'epoch': int(self.epoch),
            'metrics': {
                'depth': self.depth_metrics.to_dict() if self.depth_metrics is not None else None,
                'seg': self.seg_metrics.to_dict() if self.seg_metrics is not None else None,
            },
            'fingerprint': self.fingerprint,
            'extra': dict(self.extra),
        }

    @classmethod
    def from_record(cls, record: Dict) -> 'Checkpoint':
        if record.get('format_version') != CHECKPOINT_FORMAT_VERSION:
            raise AerodepthError(f"Unsupported checkpoint format version {record.get('format_version')}")
        arch = ArchConfig.from_dict(dict(record['arch']))
        train_config = TrainConfig.from_dict(dict(record['train'])) if record.get('train') else None
        stored = record.get('fingerprint', '')
        expected = checkpoint_fingerprint(arch, train_config)
        if stored != expected:
            raise FingerprintMismatchError(
                f"Checkpoint fingerprint {stored[:12]} does not match its configuration ({expected[:12]}); "
                f"the file was produced by a different or modified config"
            )
        metrics = record.get('metrics') or {}
        depth = metrics.get('depth')
        seg = metrics.get('seg')
        return cls(
            arch=arch,
            state_dict=record['state_dict'],
            epoch=int(record['epoch']),
            train_config=train_config,
            depth_metrics=DepthMetrics(**depth) if depth else None,
            seg_metrics=SegMetrics.from_dict(seg) if seg else None,
            fingerprint=stored,
            extra=dict(record.get('extra') or {}),
        )


class CheckpointService:
    """Saves and loads checkpoints and keeps track of the best one in a run directory"""

    def __init__(self, app=None):
        self.app = app
        self.device = 'cpu'

        if app:
            self.init_app(app)

    def init_app(self, app):
        self.app = app
        self.device = app.config.get('DEVICE', 'cpu')

    def save(self, checkpoint: Checkpoint, path: str) -> str:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        torch.save(checkpoint.to_record(), path)
        logger.debug(f"Saved checkpoint for epoch {checkpoint.epoch} to {path}")
        return path

    def load(self, path: str, expected_fingerprint: Optional[str] = None) -> Checkpoint:
        """
        Load a checkpoint and verify it against the configuration it embeds
        and, when given, against an expected fingerprint.

        Raises:
            FingerprintMismatchError: stored and recomputed fingerprints disagree
        """
        if not os.path.isfile(path):
            raise AerodepthError(f"Checkpoint {path} does not exist")
        try:
            record = torch.load(path, map_location=self.device, weights_only=True)
        except Exception as e:
            raise AerodepthError(f"Cannot read checkpoint {path}: {e}")
        checkpoint = Checkpoint.from_record(record)
        if expected_fingerprint is not None and checkpoint.fingerprint != expected_fingerprint:
            raise FingerprintMismatchError(
                f"Checkpoint {path} has fingerprint {checkpoint.fingerprint[:12]}, "
                f"expected {expected_fingerprint[:12]}"
            )
        logger.info(f"Loaded checkpoint {path} (epoch {checkpoint.epoch})")
        return checkpoint

    def save_run(self, run_dir: str, last: Checkpoint, best: Checkpoint, keep_epoch: bool = False) -> List[str]:
        paths = [self.save(last, os.path.join(run_dir, LAST_NAME)),
                 self.save(best, os.path.join(run_dir, BEST_NAME))]
        if keep_epoch:
            paths.append(self.save(last, os.path.join(run_dir, f"epoch_{last.epoch:04d}.pt")))
        return paths

    @staticmethod
    def better(candidate: Checkpoint, incumbent: Optional[Checkpoint]) -> bool:
        if incumbent is None:
            return True
        return candidate.selection_key() > incumbent.selection_key()


checkpoint_service = CheckpointService()
