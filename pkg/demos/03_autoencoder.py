"""
Autoencoder feedback
====================

Train the Q-series autoencoder for a few epochs, shorten its latent to
binary16, and shrink the encoder with 8-bit post-training quantisation.
"""
import numpy as np

from csifb.autoenc import (AeCodec, AeScheme, build_ae_samples, model_sharing_bits,
                           ptq_quantize, train_autoencoder)
from csifb.channel import ChannelProfile
from csifb.kpi import reconstruction_nmse
from csifb.store import generate_dataset

train = generate_dataset(ChannelProfile(), 300, seed=0).q.astype(complex)
test = generate_dataset(ChannelProfile(), 10, seed=1).q.astype(complex)

samples = build_ae_samples(train, "qseries")
print("training series:", samples.shape)
res = train_autoencoder(samples, encoder_sizes=(64, 40, 16), epochs=30)
print(f"training MSE {res.loss_history[0]:.4f} -> {res.loss_history[-1]:.4f}")

codec = AeCodec(AeScheme("qseries", n_q=16), res.encoder, res.decoder)
q_hat = np.stack([codec.decode(codec.encode(x)) for x in test])
print(f"report {codec.encode(test[0]).n_bits} bits, NMSE {reconstruction_nmse(test, q_hat):.1f} dB")

full = model_sharing_bits(res.encoder)
small = model_sharing_bits(ptq_quantize(res.encoder, 8))
print(f"encoder sharing bits {full} -> {small} with 8-bit PTQ "
      f"({100 * (1 - small / full):.1f}% fewer)")
