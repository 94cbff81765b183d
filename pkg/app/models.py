from __future__ import annotations

from datetime import datetime

from .extensions import db


class StudyRun(db.Model):
    id = db.Column(db.Integer, primary_key=True)
    run_key = db.Column(db.String(64), unique=True, nullable=False, index=True)  # sha256 of config snapshot
    command = db.Column(db.String(40), nullable=False, default="study")
    config_json = db.Column(db.Text, nullable=False)
    base_seed = db.Column(db.BigInteger, nullable=False)
    replicates = db.Column(db.Integer, nullable=False)
    status = db.Column(db.String(20), nullable=False, default="running")  # running | done
    created_at = db.Column(db.DateTime, default=datetime.utcnow, nullable=False)
    finished_at = db.Column(db.DateTime, nullable=True)

    results = db.relationship(
        "ReplicateResult",
        backref="run",
        cascade="all, delete-orphan",
        lazy=True,
    )


class ReplicateResult(db.Model):
    __table_args__ = (
        db.UniqueConstraint(
            "run_id",
            "iv",
            "confounding",
            "tau",
            "bandwidth",
            "replicate",
            "estimator",
            name="uq_replicate_result_cell",
        ),
    )

    id = db.Column(db.Integer, primary_key=True)
    run_id = db.Column(db.Integer, db.ForeignKey("study_run.id"), nullable=False, index=True)
    iv = db.Column(db.String(10), nullable=False)
    confounding = db.Column(db.Integer, nullable=False)
    tau = db.Column(db.Float, nullable=False)
    bandwidth = db.Column(db.Float, nullable=False)
    replicate = db.Column(db.Integer, nullable=False)
    estimator = db.Column(db.String(20), nullable=False)
    point = db.Column(db.Float, nullable=True)
    lower = db.Column(db.Float, nullable=True)
    upper = db.Column(db.Float, nullable=True)
    ess = db.Column(db.Float, nullable=True)
    rhat = db.Column(db.Float, nullable=True)
    unstable = db.Column(db.Boolean, nullable=False, default=False)
    status = db.Column(db.String(10), nullable=False, default="ok")  # ok | failed
    error = db.Column(db.Text, nullable=True)
    seed = db.Column(db.BigInteger, nullable=False)
    stream_id = db.Column(db.BigInteger, nullable=False)
    created_at = db.Column(db.DateTime, default=datetime.utcnow, nullable=False)
