# Detecting samples from classes the model never saw
#
# We train on four of six Gaussian classes, then score a held-out test set in
# windows. Samples from the two dropped classes should be flagged as drifted.

from __future__ import annotations

import numpy as np

from adaptdrift import TrainConfig, DetectorConfig, fit_system
from adaptdrift.data import drop_classes, gaussian_blobs, split_train_test, windowize
from adaptdrift.metrics import auroc, precision_recall_f1

# Six classes in 16 dimensions, class means 6 units apart.
data = gaussian_blobs(6, 16, 1000, 6.0, seed=0)
train, test = split_train_test(data, 0.75, seed=0)
train, dropped = drop_classes(train, 2, seed=0)
print("dropped classes:", dropped)

# Train the autoencoder with the contrastive term and calibrate thresholds on
# windows of the same size we score with.
system = fit_system(train, (64, 32), TrainConfig(lr=1e-3, epochs=50, batch_size=64),
                    DetectorConfig(calib_window=300))
print("final loss:", system.history[-1])

# Score the test set window by window.
flags, scores, truth = [], [], []
for w in windowize(test, 300, "shuffled", seed=0):
    s = system.score(w.X)
    flags.append(s.drifted)
    scores.append(s.score)
    truth.append(np.isin(w.y, dropped))
flags, scores, truth = map(np.concatenate, (flags, scores, truth))

m = precision_recall_f1(flags, truth)
print(f"precision {m.precision:.3f}  recall {m.recall:.3f}  F1 {m.f1:.3f}")
print(f"AUROC of D / threshold: {auroc(scores, truth):.3f}")
