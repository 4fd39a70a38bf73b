"""Small shared constructors for tests."""

import numpy as np

from previewtrack.loop import TrialRecord

TS = 0.02


def make_trial(r, y, u=None, **kw):
    r = np.asarray(r, dtype=float)
    base = dict(
        subject_id="s",
        group=1,
        preview_s=0.0,
        trial_index=1,
        ts=TS,
        r=r,
        u=np.zeros(len(r)) if u is None else u,
        y=y,
        divergent=False,
        reference_seed=0,
    )
    base.update(kw)
    return TrialRecord(**base)
