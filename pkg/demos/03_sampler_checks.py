# Sampler-correctness checks: exact oracles and a short Geweke run.
from xlate import diagnostics as dg

# state paths: long single-site chain vs enumeration of every monotone path
res = dg.hmm_oracle(n_sweeps=20_000, seed=0)
print("exact marginals:\n", res.exact.round(3))
print("per-site TV:", res.tv.round(4))

# matching: lone pair, frozen latents, link/break moves vs the logistic of the log ratio
m = dg.matching_oracle(n_moves=20_000, seed=0)
print(f"log ratio {m.delta:.3f}: exact {m.exact:.4f}, empirical {m.empirical:.4f}")

# forward simulation vs successive conditionals; a broken update shows up as large |z|.
# 1000 rounds is far too short for a verdict on the correct sampler: batches of 20 sweeps
# understate the error of slow statistics, so |z| of 4-6 is common here. Use 20k rounds
# (`xlate check geweke`) for that; the bug is obvious even at this length.
ok = dg.geweke_check(n_rounds=1000, seed=1)
bad = dg.geweke_check(n_rounds=1000, seed=1, sampler_cls=dg.ResidualShapeBug)
print("max |z| correct:", round(ok.max_abs_z(), 2), " with residual-variance bug:", round(bad.max_abs_z(), 2))
print(bad.table().splitlines()[0])
print("\n".join(l for l in bad.table().splitlines() if "resid" in l))
