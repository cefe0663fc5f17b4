#!/usr/bin/env python3
"""Post-hoc analysis of the runs from 03_train_tiny.py via the library API.

Loads both run directories, compares them on their shared batch stream,
prints the gate-threshold statistics, samples text from the gated
checkpoint, and renders the time-scale picture of a block output. Run
03_train_tiny.py first.
"""

import sys
from pathlib import Path

import numpy as np

from egalab import analysis, cli
from egalab import trainer as T
from egalab import wavelets as W
from egalab.data import Vocab
from egalab.model import sample

OUT = Path(__file__).resolve().parent / "out"
for d in ("tiny_base", "tiny_ega1"):
    if not (OUT / d / "metrics.csv").is_file():
        sys.exit(f"missing {OUT / d}; run demos/03_train_tiny.py first")

base = analysis.load_run(OUT / "tiny_base")
ega1 = analysis.load_run(OUT / "tiny_ega1")
cmp_ = analysis.compare_runs(base, ega1)
print(f"val: base {cmp_['val_base']:.4f}, ega1 {cmp_['val_other']:.4f}, "
      f"delta {cmp_['delta']:+.4f} (identical batches, digest "
      f"{base.batch_fingerprint[:16]}...)")

stats = analysis.tau_statistics(ega1.snapshots)
print(f"gate thresholds: mean final tau {stats['mean']:+.4f}, "
      f"trajectory over {len(stats['trajectory'])} snapshots")
frac = analysis.above_threshold_fraction(stats["mean"])
print(f"a standard-normal energy clears that threshold with "
      f"p = {frac['analytic']:.4f}")

model, aux = T.load_checkpoint(ega1.checkpoint_path)
vocab = Vocab(tuple(ega1.vocab_chars))
ids = sample(model, vocab.encode("the "), n_new=120,
             temperature=0.8, rng=np.random.default_rng(0))
print(f"\nsample from the gated checkpoint (120 chars, temperature 0.8):")
print(repr(vocab.decode(ids)))

probe = vocab.decode(np.asarray(
    [i % len(vocab) for i in range(64)]))  # any text works; wrap the charset
report = analysis.scalogram_report(model, vocab, probe, layer=2,
                                   scales=W.default_scales(48))
analysis.write_scalogram_csv(report, OUT / "tiny_scalogram.csv")
cli.plot_scalogram(report, OUT / "tiny_scalogram.svg")
rows = analysis.energy_spectrum(report.matrix, report.scales)
cli.plot_spectrum(rows, OUT / "tiny_spectrum.svg")
peak = max(rows, key=lambda r: r["energy"])
print(f"\nblock-2 scalogram {report.matrix.shape}, spectral peak at "
      f"scale {peak['scale']:.1f}")
print(f"wrote tiny_scalogram.csv/.svg and tiny_spectrum.svg in {OUT}")
