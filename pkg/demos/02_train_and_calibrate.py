"""
Training a dual-head BNN and calibrating its fingerprint
=========================================================

Stage 1 trains the backbone and the prediction head.  Stage 2 freezes them
and fits the uncertainty head so that the maximum of its outputs, the
fingerprint F, sits at 1 on fault-free inputs.  Quantiles of F on held-out
data become the detection boundary.
"""

import json
from pathlib import Path

import numpy as np

from selftest_bnn import calibrate_boundary, classify, fingerprint, save_checkpoint, train_two_stage
from selftest_bnn.cli import build_model, load_data
from selftest_bnn.config import ExperimentConfig

cfg = ExperimentConfig()
train, held = load_data(cfg)
print("train", train.x.shape, "test", held.task_split.x.shape, "calibration", held.fingerprint_split.x.shape)

m = build_model(cfg, train.x.shape[1:], cfg.data.classes)
m, _, history = train_two_stage(m, train, cfg.train)
print("stage 1 final loss %.4f" % history["stage1"][-1]["loss"])
print("stage 2 loss %.3g -> %.3g" % (history["stage2"][0]["loss"], history["stage2"][-1]["loss"]))

test = held.task_split
rec = m.forward(test.x)
print("test accuracy:", np.mean(rec.prediction_logits.argmax(1) == test.y))

f = fingerprint(rec)
print("median F - 1: %.2e" % (np.median(f) - 1))

b = calibrate_boundary(fingerprint(m.forward(held.fingerprint_split.x)))
print("boundary: l = 1 %+.2e, h = 1 %+.2e" % (b.l - 1, b.h - 1))

verdicts = [classify(float(v), b).status.value for v in f]
print("fault-free inputs flagged:", verdicts.count("Faulty"), "of", len(verdicts))

out = Path("demo_out")
save_checkpoint(m, out / "model.ckpt")
(out / "boundary.json").write_text(json.dumps(b.to_dict()))
print("saved", out / "model.ckpt")
