"""
Legacy compressed beamforming report
====================================

Draw one frequency-selective channel, take the SVD steering matrix on each
feedback subcarrier, and push it through the Givens angle report at two
resolutions.
"""
import numpy as np

from csifb.channel import ChannelProfile, default_subcarriers, frequency_response, generate_channel
from csifb.givens import LegacyCodec, angles_from_q, num_angles
from csifb.kpi import reconstruction_nmse
from csifb.steering import compute_steering

profile = ChannelProfile()
fc = frequency_response(generate_channel(profile, seed=1), 256, default_subcarriers())
q = compute_steering(fc.h, 2)
print("steering matrices:", q.shape)

# 8 transmit antennas and 2 streams give 13 phi and 13 psi angles
a = angles_from_q(q[0])
print("angles per subcarrier:", num_angles(8, 2))
print("phi[0] =", np.round(a.phi, 3))
print("psi[0] =", np.round(a.psi, 3))

for n_b in (4, 2):
    codec = LegacyCodec(n_b)
    cbr = codec.encode(q)
    q_hat = codec.decode(cbr)
    print(f"n_b={n_b}: {cbr.n_bits} bits, NMSE {reconstruction_nmse(q, q_hat):.1f} dB")
