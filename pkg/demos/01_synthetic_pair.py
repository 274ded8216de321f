# Generate an unpaired synthetic study pair and look at what was planted.
import numpy as np

from xlate.synth import generate, planted_design, planted_means, true_pairs

cfg = planted_design(seed=1, p_x=40, p_y=45)  # smaller variable count, same design
pair, truth = generate(cfg)

x, y = pair.dataset_x, pair.dataset_y
print("X:", x.n_samples, "samples x", x.n_variables, "variables;", len(x.individuals()), "individuals")
print("Y:", y.n_samples, "samples x", y.n_variables, "variables;", len(y.individuals()), "individuals")

# standardized per variable
print("column means ~0:", np.abs(x.values.mean(axis=0)).max().round(12))
print("column sds ~1:", x.values.std(axis=0, ddof=1).round(6)[:5])

# which clusters respond to the covariates, and how
for eff in truth.planted_effects:
    print(eff.kind, "clusters", [c + 1 for c in eff.clusters], "values", eff.values)
print("true pairs (1-based):", [(i + 1, j + 1) for i, j in true_pairs(truth.planted_effects)])

# latent mean table of Y: state x disease x cluster
table = planted_means(truth.planted_effects, "y", cfg.n_states, cfg.k_y)
print("Y cluster 1, healthy:", table[:, 0, 0])
print("Y cluster 2, diseased:", table[:, 1, 1])

# the true development paths are individual-paced
for path in truth.paths["x"][:3]:
    print("path", path + 1)
