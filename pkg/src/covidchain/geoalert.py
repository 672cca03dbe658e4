"""Zone-proximity classification from ledger zone declarations.

Classification is a pure read over declared zones: the query position is
compared against each red/orange circle and never written anywhere.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable

from .errors import ValidationError
from .transactions import LocationTx, ZoneType

EARTH_RADIUS_M = 6_371_000.0
DEFAULT_NEAR_MARGIN_M = 100.0


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self):
        if not -90.0 <= self.lat <= 90.0:
            raise ValidationError(f"latitude {self.lat} out of range [-90, 90]")
        if not -180.0 <= self.lon <= 180.0:
            raise ValidationError(f"longitude {self.lon} out of range [-180, 180]")


class AlertLevel(enum.Enum):
    INSIDE = "INSIDE"
    NEAR = "NEAR"
    CLEAR = "CLEAR"


@dataclass(frozen=True)
class ZoneAlert:
    zone_id: bytes
    zone_type: ZoneType
    level: AlertLevel
    distance_m: float

    def to_line(self) -> str:
        return (
            f"zone={self.zone_id.hex()[:8]} type={self.zone_type.token} "
            f"level={self.level.value} dist={self.distance_m:.1f}"
        )


def haversine(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in meters on a spherical Earth."""
    phi1, phi2 = math.radians(a.lat), math.radians(b.lat)
    dphi = math.radians(b.lat - a.lat)
    dlambda = math.radians(b.lon - a.lon)
    h = math.sin(dphi / 2) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlambda / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.atan2(math.sqrt(h), math.sqrt(1 - h))


def classify(
    position: GeoPoint,
    zones: Iterable[LocationTx],
    margin: float = DEFAULT_NEAR_MARGIN_M,
) -> list[ZoneAlert]:
    """Classify ``position`` against every red/orange zone.

    INSIDE within the declared radius, NEAR within ``margin`` beyond it,
    CLEAR otherwise. Green zones are informational and produce nothing.
    Results sort by distance, closest first.
    """
    if margin < 0:
        raise ValidationError("margin must be non-negative")
    alerts = []
    for zone in zones:
        if zone.zone_type is ZoneType.GREEN:
            continue
        distance = haversine(position, GeoPoint(zone.lat, zone.lon))
        if distance <= zone.radius:
            level = AlertLevel.INSIDE
        elif distance <= zone.radius + margin:
            level = AlertLevel.NEAR
        else:
            level = AlertLevel.CLEAR
        alerts.append(ZoneAlert(
            zone_id=zone.zone_id, zone_type=zone.zone_type,
            level=level, distance_m=distance,
        ))
    return sorted(alerts, key=lambda a: (a.distance_m, a.zone_id))


def alert_lines(alerts: Iterable[ZoneAlert]) -> list[str]:
    """Printable lines for alerts that actually warn (INSIDE or NEAR)."""
    return [a.to_line() for a in alerts if a.level is not AlertLevel.CLEAR]
