"""Acoustic broadcast simulation: TDMA schedule, dropout, bearing noise and
outlier injection, plus the bit-exact 31-byte message codec.

Frame layout (big-endian, 31 bytes total):

    [0]      sender id, u8
    [1]      sequence, u8
    [2..5)   depth, i24, millimeters
    [5..17)  position x, y, z, i32 each, centimeters
    [17..23) roll, pitch, yaw, i16 each, units of 2*pi/65536 rad
    [23..29) six standard deviations, u8 each,
             v = clamp(round(40 * (log10(sigma) + 3)), 0, 255)
    [29..31) CRC-16/CCITT-FALSE over bytes [0..29)

The sigma bytes cover the covariance diagonal in tangent order (rotation
xyz then translation xyz).  Bit errors on the channel are modeled as whole
frame loss; a delivered frame is always intact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .factors import predict_bearing
from .liegroups import Pose3, Rot3, wrap_angle

FRAME_LEN = 31

_ANGLE_LSB = 2.0 * math.pi / 65536.0
SIGMA_MIN = 1e-3
SIGMA_MAX = 2.37e3


class EncodeOverflowError(ValueError):
    """A message field is outside the codec's representable range."""


class CorruptFrameError(ValueError):
    """Frame failed its length or CRC check."""


def crc16_ccitt_false(data: bytes) -> int:
    """CRC-16/CCITT-FALSE: poly 0x1021, init 0xFFFF, no reflection."""
    crc = 0xFFFF
    for byte in data:
        crc ^= byte << 8
        for _ in range(8):
            if crc & 0x8000:
                crc = ((crc << 1) ^ 0x1021) & 0xFFFF
            else:
                crc = (crc << 1) & 0xFFFF
    return crc


@dataclass(frozen=True)
class AcousticMessage:
    """Broadcast payload: composed local pose, covariance diagonal, depth."""

    sender: int
    sequence: int
    depth: float
    pose: Pose3
    sigmas: tuple  # six standard deviations, tangent order

    def __post_init__(self):
        object.__setattr__(self, "sigmas", tuple(float(s) for s in self.sigmas))
        if len(self.sigmas) != 6:
            raise ValueError("sigmas must have six entries")


def _encode_signed(value: int, nbytes: int, what: str) -> bytes:
    lo = -(1 << (8 * nbytes - 1))
    hi = (1 << (8 * nbytes - 1)) - 1
    if not lo <= value <= hi:
        raise EncodeOverflowError(f"encode overflow: {what}={value}")
    return int(value).to_bytes(nbytes, "big", signed=True)


def _angle_counts(angle: float) -> int:
    counts = round(angle / _ANGLE_LSB)
    return ((counts + 32768) % 65536) - 32768


def encode(m: AcousticMessage) -> bytes:
    if not 0 <= m.sender <= 255:
        raise EncodeOverflowError(f"encode overflow: sender={m.sender}")
    if not 0 <= m.sequence <= 255:
        raise EncodeOverflowError(f"encode overflow: sequence={m.sequence}")
    out = bytearray()
    out.append(m.sender)
    out.append(m.sequence)
    out += _encode_signed(round(m.depth * 1000.0), 3, "depth_mm")
    for axis, value in zip("xyz", m.pose.translation):
        out += _encode_signed(round(value * 100.0), 4, f"position_{axis}_cm")
    for name, angle in zip(("roll", "pitch", "yaw"), m.pose.rotation.to_rpy()):
        out += _encode_signed(_angle_counts(angle), 2, name)
    for s in m.sigmas:
        if not SIGMA_MIN <= s <= SIGMA_MAX:
            raise EncodeOverflowError(f"encode overflow: sigma={s}")
        out.append(int(min(max(round(40.0 * (math.log10(s) + 3.0)), 0), 255)))
    out += crc16_ccitt_false(bytes(out)).to_bytes(2, "big")
    assert len(out) == FRAME_LEN
    return bytes(out)


def decode(frame: bytes) -> AcousticMessage:
    if len(frame) != FRAME_LEN:
        raise CorruptFrameError(f"bad frame length {len(frame)}")
    if crc16_ccitt_false(frame[:29]) != int.from_bytes(frame[29:31], "big"):
        raise CorruptFrameError("corrupt frame")
    sender = frame[0]
    sequence = frame[1]
    depth = int.from_bytes(frame[2:5], "big", signed=True) / 1000.0
    position = np.array(
        [
            int.from_bytes(frame[5 + 4 * i : 9 + 4 * i], "big", signed=True) / 100.0
            for i in range(3)
        ]
    )
    rpy = [
        int.from_bytes(frame[17 + 2 * i : 19 + 2 * i], "big", signed=True) * _ANGLE_LSB
        for i in range(3)
    ]
    sigmas = tuple(10.0 ** (frame[23 + i] / 40.0 - 3.0) for i in range(6))
    pose = Pose3(Rot3.from_rpy(*rpy), position)
    return AcousticMessage(sender, sequence, depth, pose, sigmas)


@dataclass(frozen=True)
class ChannelConfig:
    dropout: float = 0.5
    bearing_sigma: float = math.radians(10.0)
    outlier_prob: float = 0.0
    outlier_min: float = math.radians(40.0)
    outlier_max: float = math.radians(120.0)
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.dropout <= 1.0:
            raise ValueError("dropout must be in [0, 1]")
        if not 0.0 <= self.outlier_prob <= 1.0:
            raise ValueError("outlier probability must be in [0, 1]")
        if self.outlier_min >= self.outlier_max:
            raise ValueError("outlier range must have lower < upper")


@dataclass(frozen=True)
class Delivery:
    receiver: int
    message: AcousticMessage
    azimuth: float
    elevation: float
    outlier: bool  # ground-truth label, for evaluation only


def sample_bearing(
    true_az: float,
    true_el: float,
    cfg: ChannelConfig,
    rng: np.random.Generator,
    outlier_rng: np.random.Generator | None = None,
    magnitude_rng: np.random.Generator | None = None,
) -> tuple[float, float, bool]:
    """Perturb a true bearing: Gaussian inlier noise or a large outlier offset.

    Separate streams may be supplied so that enabling outliers leaves the
    inlier noise realization untouched (paired-experiment comparisons).
    """
    outlier_rng = outlier_rng if outlier_rng is not None else rng
    magnitude_rng = magnitude_rng if magnitude_rng is not None else rng
    is_outlier = bool(outlier_rng.random() < cfg.outlier_prob)
    noise_az = rng.normal(0.0, cfg.bearing_sigma)
    noise_el = rng.normal(0.0, cfg.bearing_sigma)
    if is_outlier:
        off_az = magnitude_rng.uniform(cfg.outlier_min, cfg.outlier_max)
        off_el = magnitude_rng.uniform(cfg.outlier_min, cfg.outlier_max)
        sign_az = 1.0 if magnitude_rng.random() < 0.5 else -1.0
        sign_el = 1.0 if magnitude_rng.random() < 0.5 else -1.0
        az = true_az + sign_az * off_az
        el = true_el + sign_el * off_el
    else:
        az = true_az + noise_az
        el = true_el + noise_el
    return wrap_angle(az), min(max(el, 0.0), math.pi), is_outlier


def next_transmitter(step: int, fleet_size: int, slot_length: int = 1) -> int:
    """Round-robin TDMA: sender for a given simulation step."""
    if fleet_size < 1:
        raise ValueError("fleet must have at least one agent")
    if slot_length < 1:
        raise ValueError("slot length must be >= 1")
    return (step // slot_length) % fleet_size


class Channel:
    """Lossy broadcast channel owning its seeded random streams.

    Four independent streams (dropout, bearing noise, outlier decisions,
    outlier magnitudes) are derived from the config seed, so changing the
    outlier probability does not perturb dropout patterns or inlier noise.
    """

    def __init__(self, cfg: ChannelConfig):
        self.cfg = cfg
        seqs = np.random.SeedSequence(cfg.seed).spawn(4)
        self._drop_rng = np.random.default_rng(seqs[0])
        self._noise_rng = np.random.default_rng(seqs[1])
        self._outlier_rng = np.random.default_rng(seqs[2])
        self._magnitude_rng = np.random.default_rng(seqs[3])

    def transmit(
        self,
        true_poses: dict[int, Pose3],
        sender: int,
        message: AcousticMessage,
    ) -> list[Delivery]:
        """Broadcast to all other agents; receivers are processed in id order."""
        if sender not in true_poses:
            raise ValueError(f"sender {sender} not in fleet")
        deliveries = []
        for receiver in sorted(true_poses):
            if receiver == sender:
                continue
            if self._drop_rng.random() < self.cfg.dropout:
                continue
            true_az, true_el = predict_bearing(
                true_poses[receiver], true_poses[sender]
            )
            az, el, outlier = sample_bearing(
                true_az,
                true_el,
                self.cfg,
                self._noise_rng,
                self._outlier_rng,
                self._magnitude_rng,
            )
            deliveries.append(Delivery(receiver, message, az, el, outlier))
        return deliveries
