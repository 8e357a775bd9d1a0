"""
Packet error rate
=================

Short PER curves for perfect feedback and the two legacy resolutions over
the same channels, data and noise. Use more trials for smooth curves.
"""
from csifb import linksim
from csifb.givens import LegacyCodec, PerfectCodec

cfg = linksim.SimConfig(trials_per_point=100, snr_grid_db=(0.0, 2.0, 4.0, 6.0))
rows = []
for name, codec in (("perfect", PerfectCodec()), ("legacy n_b=4", LegacyCodec(4)),
                    ("legacy n_b=2", LegacyCodec(2))):
    curve = linksim.per_curve(cfg, codec)
    print(f"{name:13s}", "  ".join(f"{p.snr_db:4.1f} dB: {p.per:.2f}" for p in curve))
    rows += [(name, "", "", p) for p in curve]

print()
print(linksim.per_csv(rows))
