"""study ledger

Revision ID: 3f1c9a7d2e5b
Revises:
Create Date: 2026-10-17 09:12:41.118204

"""
from alembic import op
import sqlalchemy as sa


# revision identifiers, used by Alembic.
revision = '3f1c9a7d2e5b'
down_revision = None
branch_labels = None
depends_on = None


def upgrade():
    op.create_table('study_run',
    sa.Column('id', sa.Integer(), nullable=False),
    sa.Column('run_key', sa.String(length=64), nullable=False),
    sa.Column('command', sa.String(length=40), nullable=False),
    sa.Column('config_json', sa.Text(), nullable=False),
    sa.Column('base_seed', sa.BigInteger(), nullable=False),
    sa.Column('replicates', sa.Integer(), nullable=False),
    sa.Column('status', sa.String(length=20), nullable=False),
    sa.Column('created_at', sa.DateTime(), nullable=False),
    sa.Column('finished_at', sa.DateTime(), nullable=True),
    sa.PrimaryKeyConstraint('id')
    )
    with op.batch_alter_table('study_run', schema=None) as batch_op:
        batch_op.create_index(batch_op.f('ix_study_run_run_key'), ['run_key'], unique=True)

    op.create_table('replicate_result',
    sa.Column('id', sa.Integer(), nullable=False),
    sa.Column('run_id', sa.Integer(), nullable=False),
    sa.Column('iv', sa.String(length=10), nullable=False),
    sa.Column('confounding', sa.Integer(), nullable=False),
    sa.Column('tau', sa.Float(), nullable=False),
    sa.Column('bandwidth', sa.Float(), nullable=False),
    sa.Column('replicate', sa.Integer(), nullable=False),
    sa.Column('estimator', sa.String(length=20), nullable=False),
    sa.Column('point', sa.Float(), nullable=True),
    sa.Column('lower', sa.Float(), nullable=True),
    sa.Column('upper', sa.Float(), nullable=True),
    sa.Column('ess', sa.Float(), nullable=True),
    sa.Column('rhat', sa.Float(), nullable=True),
    sa.Column('unstable', sa.Boolean(), nullable=False),
    sa.Column('status', sa.String(length=10), nullable=False),
    sa.Column('error', sa.Text(), nullable=True),
    sa.Column('seed', sa.BigInteger(), nullable=False),
    sa.Column('stream_id', sa.BigInteger(), nullable=False),
    sa.Column('created_at', sa.DateTime(), nullable=False),
    sa.ForeignKeyConstraint(['run_id'], ['study_run.id'], ),
    sa.PrimaryKeyConstraint('id'),
    sa.UniqueConstraint('run_id', 'iv', 'confounding', 'tau', 'bandwidth', 'replicate', 'estimator', name='uq_replicate_result_cell')
    )
    with op.batch_alter_table('replicate_result', schema=None) as batch_op:
        batch_op.create_index(batch_op.f('ix_replicate_result_run_id'), ['run_id'], unique=False)


def downgrade():
    with op.batch_alter_table('replicate_result', schema=None) as batch_op:
        batch_op.drop_index(batch_op.f('ix_replicate_result_run_id'))

    op.drop_table('replicate_result')
    with op.batch_alter_table('study_run', schema=None) as batch_op:
        batch_op.drop_index(batch_op.f('ix_study_run_run_key'))

    op.drop_table('study_run')
