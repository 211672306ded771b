# coding: utf-8

# # Training on synthetic CTR data
#
# The generator plants a rank-8 FM teacher over one-hot fields and draws
# labels from its sigmoid. We fit QFM and QNFM and compare test AUC with
# the untrained models and with the teacher itself. Takes about half a minute.

import numpy as np

from quatfm import FmParams, TrainConfig, evaluate, generate_synthetic, init_params, split_dataset, train

ds, teacher = generate_synthetic(n_fields=10, features_per_field=100, n_instances=62_500, seed=7)
train_ds, val_ds, test_ds = split_dataset(ds, (0.8, 0.1, 0.1), seed=7)
print("split sizes:", len(train_ds), len(val_ds), len(test_ds))

oracle = FmParams(np.array(teacher.w0), teacher.w, teacher.V)
print("teacher test AUC:", round(evaluate(oracle, test_ds).auc, 4))

for kind in ("qfm", "qnfm"):
    config = TrainConfig(kind, d=8, l=1, rho=0.1, learning_rate=1e-3, max_epochs=30)
    untrained = init_params(kind, ds.n, 8, 1, seed=0)
    result = train(config, train_ds, val_ds)
    report = evaluate(result.params, test_ds)
    print(f"{kind}: untrained AUC {evaluate(untrained, test_ds).auc:.4f} -> trained {report.auc:.4f}, "
          f"LE {report.le:.4f}, RMSE {report.rmse:.4f}, best epoch {result.best_epoch}/{len(result.history)}")

# The validation curve that drove early stopping:

for rec in result.history:
    print(f"  epoch {rec.epoch:2d}  train {rec.train_loss:.4f}  val {rec.val_loss:.4f}")
