"""
Run ledger and run configuration.
Every command invocation is recorded with its config hash, seed and status.
"""
from dataclasses import dataclass
from datetime import datetime
from typing import Dict, Optional

from app import db


class RunRecord(db.Model):
    """Ledger entry for one command run."""

    __tablename__ = 'runs'

    id = db.Column(db.Integer, primary_key=True)
    command = db.Column(db.String(32), nullable=False, index=True)
    config_hash = db.Column(db.String(64), nullable=False, index=True)
    seed = db.Column(db.String(20), nullable=False)  # unsigned 64-bit, stored as text
    mode = db.Column(db.String(16), nullable=False)  # 'rational' or 'float'
    output_dir = db.Column(db.String(512), nullable=False)

    # Outcome
    status = db.Column(db.String(16), nullable=False, default='running')  # running, ok, failed
    message = db.Column(db.Text)

    created_at = db.Column(db.DateTime, nullable=False, default=datetime.utcnow, index=True)
    finished_at = db.Column(db.DateTime)

    def __repr__(self):
        return f'<RunRecord {self.command} {self.config_hash[:8]} ({self.status})>'

    def to_dict(self):
        """Convert run record to dictionary."""
        return {
            'id': self.id,
            'command': self.command,
            'config_hash': self.config_hash,
            'seed': int(self.seed),
            'mode': self.mode,
            'output_dir': self.output_dir,
            'status': self.status,
            'message': self.message,
            'created_at': self.created_at.isoformat() if self.created_at else None,
            'finished_at': self.finished_at.isoformat() if self.finished_at else None
        }


@dataclass
class RunConfig:
    """
    Parameters of one command run.

    `params` is the command's JSON block after flag overrides; seed, output
    directory, arithmetic mode and thread cap come from flags or the block.
    """

    command: str
    params: Dict
    seed: int
    output_dir: str
    mode: str = 'rational'
    threads: Optional[int] = None
    source: Optional[str] = None

    def manifest_block(self) -> Dict:
        """The reproducibility-relevant part (threads are excluded)."""
        return {'command': self.command, 'params': self.params, 'seed': self.seed, 'mode': self.mode}
