"""The label-conditioned Gaussian-mixture prior the AAE codes are pushed towards."""
import numpy as np

from aae_emotion import default_layout

labels = ["ang", "hap", "neu", "sad"]
prior = default_layout(labels, code_dim=2, radius=4.0, stddev=0.5)

for label, comp in zip(labels, prior.components):
    print(f"{label}: mean {np.round(comp.mean, 3)}  std {comp.stddev}")

rng = np.random.default_rng(1)
draws = prior.sample("hap", 2000, rng)
print("empirical mean of 2000 'hap' draws:", np.round(draws.mean(axis=0), 3))

# nearest-mean assignment recovers the label for almost all draws
own = prior.component_index("hap")
print("fraction assigned back to 'hap':", np.mean(prior.nearest_component(draws) == own))
print("log density at the 'sad' mean:", float(prior.log_density(prior.components[3].mean[None])[0]))
