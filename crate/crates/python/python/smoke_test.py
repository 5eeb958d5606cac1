"""Quick end-to-end check of the extension module.

Build and install first:  maturin develop --release -m crates/python/Cargo.toml
"""

import json
import math
import random

import underband


def main():
    rng = random.Random(0)
    s = [[rng.random() for _ in range(12)] for _ in range(10)]

    w, v, violation, residual = underband.nmu(s, 3, seed=1, max_iters=300)
    assert len(w) == 10 and len(w[0]) == 3 and len(v) == 3 and len(v[0]) == 12
    assert min(min(r) for r in w) >= 0.0 and min(min(r) for r in v) >= 0.0
    smax = max(max(r) for r in s)
    assert violation <= 1e-2 * smax, violation
    print(f"nmu: violation {violation:.3e}, squared residual {residual:.4f}")

    w, v = underband.nmf(s, 3, seed=1)
    assert min(min(r) for r in w) >= 0.0

    gauss = [rng.gauss(0.0, 1.0) for _ in range(200_000)]
    k = underband.kurtosis(gauss)
    assert abs(k - 3.0) < 0.05, k

    x = underband.synthetic_signal("idler", seed=2)
    assert x.sample_rate_hz > 0 and len(x) == len(x.samples)
    mag = underband.spectrogram(x)
    assert len(mag) == 257
    freqs, amps = underband.envelope_spectrum(x)
    assert len(freqs) == len(amps)

    passband = [1.0 if 2_000 <= f <= 4_000 else 0.0 for f in underband.bin_frequencies(x.sample_rate_hz)]
    y = underband.filter_signal(x, passband)
    assert len(y) == len(x)
    print(f"idler kurtosis {x.kurtosis():.3f}, filtered {y.kurtosis():.3f}")

    report = json.loads(
        underband.detect(method="nmf", preset="idler", rank_min=2, rank_max=3, trials=2, max_iters=100)
    )
    chosen = report["chosen"]
    assert chosen["rank"] in (2, 3) and math.isfinite(chosen["kurtosis"])
    print(f"detect: rank {chosen['rank']} column {chosen['column']}, envelope peak {chosen['envelope_peak_hz']:.2f} Hz")

    try:
        underband.detect(method="pca")
    except ValueError as e:
        print(f"rejected bad method: {e}")
    else:
        raise AssertionError("bad method accepted")

    print("smoke test passed")


if __name__ == "__main__":
    main()
