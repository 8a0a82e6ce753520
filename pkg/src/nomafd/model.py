"""System-model quantities: interference sets, SINR, rates, MSE and SIC feasibility.

Power allocations are ``(F, K)`` arrays indexed ``[f, user]`` in watts.
Rates are in nats; conversion to bits happens at the reporting boundary.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelSet

UPLINK = "uplink"
DOWNLINK = "downlink"

# powers at or below this are treated as switched off
EPS_ACTIVE = 1e-10


@dataclass(frozen=True)
class StrongUserMap:
    """Strong uplink and downlink user per subcarrier (``x^(s) = 1`` entries)."""

    uplink: np.ndarray  # (F,) user ids in U
    downlink: np.ndarray  # (F,) user ids in D
    num_uplink: int
    num_downlink: int

    def __post_init__(self) -> None:
        ul = np.asarray(self.uplink, dtype=np.intp)
        dl = np.asarray(self.downlink, dtype=np.intp)
        if ul.shape != dl.shape or ul.ndim != 1:
            raise ValueError("need one strong user per direction per subcarrier")
        m, k = self.num_uplink, self.num_uplink + self.num_downlink
        if np.any((ul < 0) | (ul >= m)):
            raise ValueError("strong uplink user outside U")
        if np.any((dl < m) | (dl >= k)):
            raise ValueError("strong downlink user outside D")
        object.__setattr__(self, "uplink", ul)
        object.__setattr__(self, "downlink", dl)

    @property
    def num_subcarriers(self) -> int:
        return len(self.uplink)

    @property
    def num_users(self) -> int:
        return self.num_uplink + self.num_downlink

    def is_strong(self, i: int, f: int) -> bool:
        return i == self.uplink[f] or i == self.downlink[f]

    def flags(self) -> np.ndarray:
        """``x^(s)`` as an ``(F, K)`` 0/1 array."""
        x = np.zeros((self.num_subcarriers, self.num_users), dtype=np.int8)
        rows = np.arange(self.num_subcarriers)
        x[rows, self.uplink] = 1
        x[rows, self.downlink] = 1
        return x

    def to_dict(self) -> dict:
        return {UPLINK: self.uplink.tolist(), DOWNLINK: self.downlink.tolist()}


def _check_user(i: int, num_users: int) -> None:
    if not 0 <= i < num_users:
        raise KeyError(f"unknown user id {i}")


def interference_set(i: int, f: int, strong: StrongUserMap) -> frozenset[int]:
    """Users whose signal still interferes with user ``i`` on ``f`` after SIC."""
    m, k = strong.num_uplink, strong.num_users
    _check_user(i, k)
    everyone = set(range(k))
    if i < m:
        if i == strong.uplink[f]:
            return frozenset(everyone - {i})
        return frozenset(everyone - {i, int(strong.uplink[f])})
    if i == strong.downlink[f]:
        return frozenset(range(m))
    return frozenset(everyone - {i})


def cochannel_set(i: int, f: int, strong: StrongUserMap) -> frozenset[int]:
    """Users that receive interference from ``i`` on ``f``.

    The strong downlink user is excluded from its own set.
    """
    m, k = strong.num_uplink, strong.num_users
    _check_user(i, k)
    everyone = set(range(k))
    if i < m:
        if i == strong.uplink[f]:
            return frozenset(range(m, k))
        return frozenset(everyone - {i})
    if i == strong.downlink[f]:
        return frozenset(everyone - {i})
    return frozenset(everyone - {i, int(strong.downlink[f])})


def interference_mask(strong: StrongUserMap) -> np.ndarray:
    """Boolean ``(F, K, K)`` array, ``mask[f, i, j]`` iff ``j`` interferes with ``i``.

    The co-channel sets are the transpose: ``mask[f, j, i]`` iff ``j`` is hurt by ``i``.
    """
    f_count, m, k = strong.num_subcarriers, strong.num_uplink, strong.num_users
    mask = np.ones((f_count, k, k), dtype=bool)
    idx = np.arange(k)
    mask[:, idx, idx] = False
    for f in range(f_count):
        su, sd = strong.uplink[f], strong.downlink[f]
        weak_ul = [u for u in range(m) if u != su]
        mask[f, weak_ul, su] = False
        mask[f, sd, m:] = False
    return mask


def oma_mask(num_subcarriers: int, num_users: int) -> np.ndarray:
    """Mask without any cancellation: everybody interferes with everybody."""
    mask = np.ones((num_subcarriers, num_users, num_users), dtype=bool)
    idx = np.arange(num_users)
    mask[:, idx, idx] = False
    return mask


def sinr_matrix(power: np.ndarray, channels: ChannelSet, mask: np.ndarray) -> np.ndarray:
    """All SINRs at once, ``(F, K)``."""
    g = channels.power_gains
    own = np.diagonal(g, axis1=1, axis2=2) * power
    # interference[f, i] = sum_j mask[f, i, j] * G[f, j, i] * P[f, j]
    interf = np.einsum("fij,fji,fj->fi", mask, g, power)
    return own / (interf + channels.noise_power)


def sinr(i: int, f: int, power: np.ndarray, channels: ChannelSet, strong: StrongUserMap) -> float:
    g = channels.power_gains[f]
    if power[f, i] <= 0.0:
        return 0.0
    interf = sum(g[j, i] * power[f, j] for j in sorted(interference_set(i, f, strong)))
    return float(g[i, i] * power[f, i] / (interf + channels.noise_power))


def rate(gamma):
    """Achievable rate ``log(1 + gamma)`` in nats."""
    return np.log1p(gamma)


def weighted_sum_rate(power: np.ndarray, channels: ChannelSet, strong: StrongUserMap,
                      alpha) -> float:
    gamma = sinr_matrix(power, channels, interference_mask(strong))
    return float(np.sum(np.asarray(alpha) * rate(gamma)))


def gamma_sic(k: int, i: int, f: int, power: np.ndarray, channels: ChannelSet) -> float:
    """SIC feasibility margin for strong downlink user ``i`` cancelling weak ``k``.

    Nonnegative means ``i`` decodes ``k``'s stream at least as well as ``k``.
    Only uplink powers enter.
    """
    if k == i:
        raise ValueError("weak and strong downlink users must differ")
    m = channels.num_uplink
    if k < m or i < m:
        raise ValueError("SIC margin is defined between downlink users only")
    g = channels.power_gains[f]
    ul = power[f, :m]
    cross = np.sum((g[i, i] * g[:m, k] - g[k, k] * g[:m, i]) * ul)
    return float(cross + channels.noise_power * (g[i, i] - g[k, k]))


def sic_margin_slopes(k: int, i: int, f: int, channels: ChannelSet) -> np.ndarray:
    """Derivative of ``gamma_sic(k, i, f)`` with respect to each uplink power."""
    m = channels.num_uplink
    g = channels.power_gains[f]
    return g[i, i] * g[:m, k] - g[k, k] * g[:m, i]


def mse(i: int, f: int, g_scale: complex, power: np.ndarray, channels: ChannelSet,
        strong: StrongUserMap) -> float:
    h = channels.gains[f]
    gp = channels.power_gains[f]
    err = abs(1.0 - g_scale * h[i, i] * np.sqrt(power[f, i])) ** 2
    for j in sorted(interference_set(i, f, strong)):
        err += abs(g_scale) ** 2 * gp[j, i] * power[f, j]
    return float(err + abs(g_scale) ** 2 * channels.noise_power)


def mmse_scaling(i: int, f: int, power: np.ndarray, channels: ChannelSet,
                 strong: StrongUserMap) -> complex:
    """Receiver scaling minimizing the MSE; conjugates the direct gain."""
    h = channels.gains[f]
    gp = channels.power_gains[f]
    p = power[f, i]
    if p <= 0.0:
        return 0j
    total = gp[i, i] * p + channels.noise_power
    total += sum(gp[j, i] * power[f, j] for j in sorted(interference_set(i, f, strong)))
    return complex(np.conj(h[i, i]) * np.sqrt(p) / total)


def cross_sinr(k: int, i: int, f: int, power: np.ndarray, channels: ChannelSet) -> float:
    """SINR of downlink user ``k``'s stream measured at downlink receiver ``i``.

    Every other stream counts as interference, matching the comparison that
    underlies :func:`gamma_sic`.
    """
    g = channels.power_gains[f]
    interf = sum(g[j, i] * power[f, j] for j in range(channels.num_users) if j != k)
    return float(g[k, i] * power[f, k] / (interf + channels.noise_power))
