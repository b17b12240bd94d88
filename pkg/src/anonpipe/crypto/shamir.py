"""Shamir secret sharing over a prime field.

Sharing uses a random degree-(t-1) polynomial with P(0) = secret;
reconstruction is Lagrange interpolation at zero.  The field is a
parameter: pipelines use the group scalar field, exhaustive tests use
GF(251).
"""

from __future__ import annotations

import secrets
from dataclasses import dataclass

from anonpipe.errors import DuplicateShareX, InsufficientShares


@dataclass(frozen=True)
class PrimeField:
    modulus: int

    @property
    def elem_len(self) -> int:
        return (self.modulus.bit_length() + 7) // 8

    def reduce(self, v: int) -> int:
        return v % self.modulus

    def random_nonzero(self, rng=None) -> int:
        draw = (rng.randbytes if rng is not None else secrets.token_bytes)
        width = self.elem_len + 8
        while True:
            v = int.from_bytes(draw(width), "big") % self.modulus
            if v != 0:
                return v

    def encode(self, v: int) -> bytes:
        return v.to_bytes(self.elem_len, "big")

    def decode(self, data: bytes) -> int:
        v = int.from_bytes(data, "big")
        if v >= self.modulus:
            raise ValueError("field element out of range")
        return v


GF251 = PrimeField(251)


@dataclass(frozen=True)
class ShamirShare:
    x: int
    y: int

    def __post_init__(self):
        if self.x == 0:
            raise ValueError("share x must be nonzero")


def eval_poly(field: PrimeField, coeffs: list[int], x: int) -> int:
    """Evaluate sum(coeffs[i] * x^i) by Horner's rule."""
    acc = 0
    for c in reversed(coeffs):
        acc = (acc * x + c) % field.modulus
    return acc


def shamir_share(
    field: PrimeField, secret: int, t: int, n: int, rng=None
) -> list[ShamirShare]:
    """Split `secret` into n shares recoverable from any t of them."""
    if not 1 <= t <= n:
        raise ValueError("need 1 <= t <= n")
    if n >= field.modulus:
        raise ValueError("n must be below the field modulus")
    coeffs = [field.reduce(secret)] + [_random_coeff(field, rng) for _ in range(t - 1)]
    xs = _distinct_nonzero_xs(field, n, rng)
    return [ShamirShare(x=x, y=eval_poly(field, coeffs, x)) for x in xs]


def _random_coeff(field: PrimeField, rng) -> int:
    # Coefficients may be zero; only x values must be nonzero.
    draw = (rng.randbytes if rng is not None else secrets.token_bytes)
    return int.from_bytes(draw(field.elem_len + 8), "big") % field.modulus


def _distinct_nonzero_xs(field: PrimeField, n: int, rng) -> list[int]:
    xs: list[int] = []
    seen: set[int] = set()
    while len(xs) < n:
        x = field.random_nonzero(rng)
        if x not in seen:
            seen.add(x)
            xs.append(x)
    return xs


def shamir_reconstruct(field: PrimeField, shares: list[ShamirShare], t: int) -> int:
    """Recover P(0) by Lagrange interpolation from the first t shares given."""
    if len(shares) < t:
        raise InsufficientShares(f"need {t} shares, got {len(shares)}")
    pts = shares[:t]
    if len({s.x for s in pts}) != len(pts):
        raise DuplicateShareX("shares with colliding x values")
    p = field.modulus
    acc = 0
    for i, si in enumerate(pts):
        num, den = 1, 1
        for j, sj in enumerate(pts):
            if i == j:
                continue
            num = (num * (-sj.x)) % p
            den = (den * (si.x - sj.x)) % p
        acc = (acc + si.y * num * pow(den, -1, p)) % p
    return acc
