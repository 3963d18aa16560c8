"""Poison a small labeled corpus and watch a linear probe pick up the trigger.

The probe is multinomial logistic regression on block-DCT magnitudes, the
weakest learner that can still see a frequency-layout trigger.  Its numbers
are proxies for benign accuracy and attack success, not CNN results.
Takes about a minute.
"""

from roibackdoor import analysis as an
from roibackdoor import desk, pipeline as pl

x, y = desk.desk_dataset(1500, seed=11)
k = len(desk.PHOTO_NAMES)
train = pl.Dataset(x[:1000], y[:1000], k, "desk")
test = pl.Dataset(x[1000:], y[1000:], k, "desk")

cfg = pl.AttackConfig(route="caa", poison_rate=0.1, target=0, seed=3)
result = pl.run(train, cfg)
print(result.manifest.summary())

model = an.probe_train(result.dataset, seed=0)
clean_model = an.probe_train(pl.compress_uniform(train), seed=0)
test_c = pl.compress_uniform(test)
triggered = pl.poison_test_set(test, cfg)

for name, m in (("poisoned", model), ("clean", clean_model)):
    eff = an.probe_effect(m, test_c, triggered, cfg.target)
    print(f"{name:8s} probe: ba_proxy {eff.ba_proxy:.3f}  asr_proxy {eff.asr_proxy:.3f}")
