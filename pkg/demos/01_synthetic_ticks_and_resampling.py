# %% [markdown]
# # Synthetic ticks and resampling
#
# Generate a month of regime-switching quotes, then bucket the ticks into
# fixed-length periods at each of the four default scales.

# %%
import numpy as np

from scaleirl.ticks import RegimeConfig, generate_synthetic_market, resample

market = generate_synthetic_market(RegimeConfig(seed=1))
aggs = {m: resample(market.ticks, m) for m in (5, 15, 30, 60)}
print(len(market.ticks), "ticks over", len({a.session for a in aggs[60]}), "sessions")
market.ticks[0]

# %% [markdown]
# Every five-minute block carries a hidden regime label. The three regimes
# differ in the direction of price drift, spread, volume and quote imbalance.

# %%
labels = market.labels_by_period()
print(np.bincount(list(labels.values())))

# %% [markdown]
# Resampling keeps only in-session ticks. Volume is summed; price, spread and
# imbalance are averaged. Coarser scales conserve total volume.

# %%
for m, rows in aggs.items():
    vol = sum(a.total_trade_volume for a in rows)
    print(f"{m:>2}m  periods={len(rows):5d}  volume={vol:,.0f}")

# %%
hourly = aggs[60]
prices = np.array([a.mean_trade_price for a in hourly])
print("first session, hourly mean price:", np.round(prices[:8], 3))
