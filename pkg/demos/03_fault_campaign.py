"""
A Monte Carlo bit-flip campaign
===============================

Each run flips a random fraction of the stored weights, evaluates the test
set, and restores the golden weights.  Coverage is the fraction of inputs the
fingerprint detector flags.  The max-logit score, calibrated the same way,
runs alongside as a baseline.

Run ``02_train_and_calibrate.py`` first.
"""

import json
from pathlib import Path

import numpy as np

from selftest_bnn import (CampaignConfig, FingerprintBoundary, calibrate_boundary, evaluate_model, load_checkpoint,
                          run_campaign, summarize)
from selftest_bnn.cli import load_data
from selftest_bnn.config import ExperimentConfig
from selftest_bnn.nn import max_logit_score
from selftest_bnn.report import write_plot_csv, write_report

out = Path("demo_out")
m = load_checkpoint(out / "model.ckpt")
b = FingerprintBoundary.from_dict(json.loads((out / "boundary.json").read_text()))

cfg = ExperimentConfig()
_, held = load_data(cfg)
test = held.task_split
golden = evaluate_model(m, test, b)
print("baseline accuracy %.3f, fault-free coverage (FPR) %.4f" % (golden.accuracy, golden.coverage))

mls = calibrate_boundary(max_logit_score(m.forward(held.fingerprint_split.x)))

campaign = CampaignConfig(cfg.faults, runs_per_rate=10)
results = run_campaign(m, b, campaign, test, golden.accuracy, extra_detectors={"max_logit": (max_logit_score, mls)})
summary = summarize(results, golden.accuracy, golden.coverage, campaign.runs_per_rate)

print("\n rate   accuracy   coverage (median)   max-logit (median)")
for s in summary.rates:
    base = np.median([r.extra_coverage["max_logit"] for r in results if r.rate == s.rate])
    print("%5.2f   %8.3f   %17.4f   %18.4f" % (s.rate, s.acc_mean, s.cov_median, base))

write_report(results, summary, b, out, "csv")
write_plot_csv(summary, results, out / "plot.csv")
print("\nreports in", out)
