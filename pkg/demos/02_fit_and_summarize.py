# Fit the sampler to a small planted pair and read the pairing table.
import numpy as np

from xlate.sampler import GibbsConfig, run_chain
from xlate.summarize import report_text, summarize_trace
from xlate.synth import PlantedEffect, SynthConfig, generate

up = (0.0, 1.0, 2.0, 3.0)
cfg = SynthConfig(n_individuals_x=10, n_individuals_y=10, series_length_range=(5, 10), p_x=30, p_y=30,
                  k_x=2, k_y=2, n_states=4, seed=7,
                  planted_effects=[PlantedEffect("shared_time", (0, 1), up)])
pair, truth = generate(cfg)

gc = GibbsConfig(n_burn_in=300, n_samples=300, thinning=3, seed=7, n_states=4, k_x=2, k_y=2)
trace = run_chain(pair, gc)
print(len(trace), "snapshots; final log joint", round(trace.log_joints[-1], 2))

summary = summarize_trace(trace)
print(np.round(summary.pairing.link_freq, 3))  # rows X clusters, columns Y clusters
print("unmatched X:", summary.pairing.unmatched_x.round(3))

# fitted labels are arbitrary: compare with the truth through variable overlap
z_fit = trace.snapshots[-1].assignment_x
print("overlap X (true x fitted):")
print(np.array([[np.sum((truth.assignment["x"] == a) & (z_fit == b)) for b in range(2)] for a in range(2)]))

print(report_text(summary)[:800])
