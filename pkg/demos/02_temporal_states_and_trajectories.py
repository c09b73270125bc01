# %% [markdown]
# # Temporal states and trajectories
#
# Turn fifteen-minute aggregates into standardized change features, cluster
# them into discrete market states, and read each session as a sequence of
# (state, action) pairs.

# %%
import numpy as np

from scaleirl.features import compute_period_features, fit_standardizer
from scaleirl.states import cluster_states
from scaleirl.ticks import RegimeConfig, generate_synthetic_market, resample
from scaleirl.trajectories import Action, build_trajectories

market = generate_synthetic_market(RegimeConfig(seed=2))
aggs = resample(market.ticks, 15)
feats, kept = compute_period_features(aggs)
print(len(aggs), "periods ->", len(feats), "feature vectors (first period of each session has no delta)")

# %%
x = np.array([f.values() for f in feats])
scaler = fit_standardizer(x)
z = scaler.transform(x)
print("standardized mean", np.round(z.mean(axis=0), 12))
print("standardized std ", np.round(z.std(axis=0), 12))

# %% [markdown]
# K-means with k-means++ seeding and several restarts. Centroids are sorted
# lexicographically so state ids are stable across runs.

# %%
model, states = cluster_states(z, 5, seed=0, scale_minutes=15)
for sig in model.signatures:
    print(sig.state_id, np.round(sig.centroid, 2), sig.member_count)

# %% [markdown]
# Actions come from the sign of the next period's average return: positive
# is BUY, negative is SELL, inside the dead band is NEUTRAL.

# %%
trajs = build_trajectories(states, kept, epsilon=0.0)
acts = np.concatenate([t.actions for t in trajs])
print(len(trajs), "trajectories of length", {len(t) for t in trajs})
print({a.name: int((acts == a).sum()) for a in Action})
trajs[0].steps[:5]
