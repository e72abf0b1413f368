"""Two-level knowledge distillation against a frozen teacher."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad


def snapshot_teacher(model):
    """Frozen deep copy of the model taken at a task boundary."""
    return model.clone()


def teacher_outputs(teacher, tokens, span):
    """Teacher logits and span feature for one span, no graph recorded."""
    with ad.no_grad():
        res = teacher.forward(tokens, [span])
    return res.logits.data[0].copy(), res.span_features.data[0].copy()


def prediction_kd(teacher_logits, student_logits, temperature: float = 2.0):
    """Soft cross-entropy between temperature-softened distributions.

    The teacher distribution covers the teacher's class set; the student
    contributes the logit prefix of the same length, so newly added classes
    are left out of the comparison.
    """
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    t = np.asarray(getattr(teacher_logits, "data", teacher_logits),
                   dtype=np.float64).reshape(-1)
    k_old = t.shape[0]
    if student_logits.data.ndim != 1:
        raise ValueError("student logits must be a vector")
    if k_old > student_logits.data.shape[0]:
        raise ValueError(f"teacher has {k_old} classes but student only "
                         f"{student_logits.data.shape[0]}")
    q = ad.softmax_temperature(t, temperature)
    prefix = ad.narrow(student_logits, 0, 0, k_old)
    log_p = ad.log_softmax(prefix * (1.0 / temperature))
    return -ad.tsum(log_p * ad.Tensor(q))


def feature_kd(teacher_feature, student_feature):
    """1 - cosine similarity between teacher and student span features."""
    t = np.asarray(getattr(teacher_feature, "data", teacher_feature),
                   dtype=np.float64).reshape(-1)
    return 1.0 - ad.cosine_similarity(student_feature, ad.Tensor(t))
