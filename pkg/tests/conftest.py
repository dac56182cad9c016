import time
from fractions import Fraction

import pytest

from dimgroup.diagram import BratteliDiagramPrefix, ExactStateOracle, Presentation
from dimgroup.verifier import BlockDiagram, BlockLevel, ParamSchedule

PIPELINE_SEEDS = (1, 2, 3)
PIPELINE_LEVELS = 13
PIPELINE_SECONDS = {}


def worked_block(A11=20, A12=5, A21=5, A22=20, u1=(8, -3, -3, 8), u2=(145, -20, -20, 145), a=5, M=20,
                 r=("3/2", "10/7")):
    """The hand-checked two-level J=1 prefix, with optional single-entry edits."""
    bd = BlockDiagram(
        (1, 1),
        [BlockLevel(((A11,),), ((A12,),), ((A21,),), ((A22,),))],
        [tuple((x,) for x in u1), tuple((x,) for x in u2)],
    )
    sched = ParamSchedule(r, (8, 130), (4, 5), (M,), (a,))
    return bd, sched


def _inverse2(c1, c2):
    """Rows of the inverse of the 2x2 matrix with columns c1, c2."""
    det = Fraction(c1[0] * c2[1] - c2[0] * c1[1])
    return ((c2[1] / det, -c2[0] / det), (-c1[1] / det, c1[0] / det))


def worked_presentation():
    """Flattened worked prefix with exact state rows rho_n = [u^1 u^2]^-1."""
    u1 = ((8, -3), (145, -20))
    u2 = ((-3, 8), (-20, 145))
    rows = [_inverse2(a, b) for a, b in zip(u1, u2)]
    diagram = BratteliDiagramPrefix((2, 2), (((20, 5), (5, 20)),))
    return Presentation(diagram, u1, u2, ExactStateOracle(rows))


@pytest.fixture
def block_prefix():
    return worked_block()


@pytest.fixture
def exact_presentation():
    return worked_presentation()


@pytest.fixture(scope="session")
def pipeline_runs():
    """Two-stage pipeline output on flattened fast-schedule diagrams, keyed by seed."""
    from dimgroup.constructor import PipelineConfig, run_pipeline
    from dimgroup.samples import GenSpec, flatten, generate

    out = {}
    for seed in PIPELINE_SEEDS:
        bd, sched = generate(GenSpec(seed=seed, levels=PIPELINE_LEVELS, j_max=1, schedule="fast"))
        p = flatten(bd, sched)
        cfg = PipelineConfig(r=(Fraction(3, 2), Fraction(4, 3)), a=(3,), stages=2)
        start = time.process_time()
        out[seed] = (p, cfg) + run_pipeline(p, cfg)
        PIPELINE_SECONDS[seed] = time.process_time() - start
    return out
