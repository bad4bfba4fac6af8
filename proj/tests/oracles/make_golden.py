#!/usr/bin/env python3
"""Independent generator for the committed golden WAV fixtures.

Mirrors the counter-based RNG contract (SplitMix64 draws, 53-bit uniforms, Box-Muller cosine branch)
and the clip formulas, then writes PCM16 WAV with clamp, scale by 32767 and round half away from zero.
"""
import math
import struct
import sys
from pathlib import Path

MASK = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15


def mix64(z):
    z &= MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
    return z ^ (z >> 31)


def derive_key(seed, tag):
    return mix64(seed ^ mix64((tag * GAMMA + 0x632BE59BD9B4E019) & MASK))


class Rng:
    def __init__(self, key):
        self.key = key
        self.counter = 0

    def next_u64(self):
        self.counter += 1
        return mix64((self.key + self.counter * GAMMA) & MASK)

    def uniform(self):
        return (self.next_u64() >> 11) * 2.0 ** -53

    def normal(self):
        u1 = 1.0 - self.uniform()
        u2 = self.uniform()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)


def sine(freq, seconds, rate, amplitude=0.5):
    n = round(seconds * rate)
    return [amplitude * math.sin(2.0 * math.pi * freq * float(i) / rate) for i in range(n)]


def speech(seed=0, seconds=1.0, rate=16000):
    rng = Rng(derive_key(seed, 0x5350))
    out = []
    peak = 0.0
    for i in range(round(seconds * rate)):
        t = float(i) / rate
        env = 0.6 + 0.4 * math.sin(2.0 * math.pi * 4.0 * t)
        v = 0.0
        for h in range(1, 51):
            v += math.sin(2.0 * math.pi * 140.0 * h * t) / h
        s = env * v + 0.05 * rng.normal()
        out.append(s)
        peak = max(peak, abs(s))
    scale = 0.5 / peak
    return [s * scale for s in out]


def round_half_away(x):
    a = abs(x)
    q = math.floor(a)
    if a - q >= 0.5:
        q += 1
    return int(-q if x < 0 else q)


def wav_bytes(samples, rate):
    data = b"".join(struct.pack("<h", round_half_away(min(1.0, max(-1.0, s)) * 32767.0)) for s in samples)
    header = b"RIFF" + struct.pack("<I", 36 + len(data)) + b"WAVE"
    header += b"fmt " + struct.pack("<IHHIIHH", 16, 1, 1, rate, rate * 2, 2, 16)
    header += b"data" + struct.pack("<I", len(data))
    return header + data


def main():
    out_dir = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).resolve().parent.parent / "golden"
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "sine440_16k_100ms.wav").write_bytes(wav_bytes(sine(440.0, 0.1, 16000), 16000))
    (out_dir / "speech_clean.wav").write_bytes(wav_bytes(speech(), 16000))


if __name__ == "__main__":
    main()
