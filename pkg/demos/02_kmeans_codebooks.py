"""
K-means codebooks
=================

Train small codebooks for the three vector layouts, compress them for
sharing, and compare the bits sent per report with the reconstruction error.
A few hundred soundings keep this quick; real runs use thousands.
"""
import numpy as np

from csifb.channel import ChannelProfile
from csifb.kmeans import (KmeansCodec, build_training_vectors, compress_codebook,
                          decompress_codebook, train_codebook)
from csifb.kpi import reconstruction_nmse
from csifb.store import generate_dataset

train = generate_dataset(ChannelProfile(), 200, seed=0).q.astype(complex)
test = generate_dataset(ChannelProfile(), 10, seed=1).q.astype(complex)
n_bf = 8

for scheme in ("joint", "split", "steering"):
    vectors = build_training_vectors(train, scheme)
    cb = train_codebook(vectors, n_bf, max_iter=30, scheme=scheme, n_r=8, n_c=2)
    shared = compress_codebook(cb, n_b=4)
    codec = KmeansCodec(decompress_codebook(shared))
    q_hat = np.stack([codec.decode(codec.encode(x)) for x in test])
    print(f"{scheme:9s} vectors {vectors.shape}, WCSS {cb.wcss_history[0]:.0f} -> "
          f"{cb.wcss_history[-1]:.0f} in {len(cb.wcss_history) - 1} rounds")
    print(f"{'':9s} sharing {shared.n_bits} bits, report {codec.encode(test[0]).n_bits} bits, "
          f"NMSE {reconstruction_nmse(test, q_hat):.1f} dB")
