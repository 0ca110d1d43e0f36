"""Virtual-time schedule of prior-map render requests and deliveries."""

import logging
from dataclasses import dataclass
from typing import List

from ..exceptions import ConfigValidationError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RenderEvent:
    """
    One render in flight.

    :ivar int index: Request counter
    :ivar float request_ts: Time the render is requested, s
    :ivar float delivery_ts: Time the image arrives, s
    """

    index: int
    request_ts: float
    delivery_ts: float


def validate_rates(camera_rate: float, render_rate: float, latency: float) -> None:
    """
    Sanity rules for the render timeline.

    :raises ConfigValidationError: On non-positive rates, negative latency or a
        render rate above the camera rate
    """
    if camera_rate <= 0.0 or render_rate <= 0.0:
        raise ConfigValidationError(
            f"Rates must be positive (camera {camera_rate}, render {render_rate})"
        )
    if render_rate > camera_rate:
        raise ConfigValidationError(
            f"Render rate {render_rate} Hz exceeds camera rate {camera_rate} Hz"
        )
    if latency < 0.0:
        raise ConfigValidationError(f"Render latency {latency} must be >= 0")


def schedule_renders(
    camera_rate: float, render_rate: float, latency: float, horizon: float
) -> List[RenderEvent]:
    """
    Requests at multiples of the render period before the horizon.

    :param float camera_rate: Camera rate, Hz
    :param float render_rate: Render rate, Hz
    :param float latency: Render latency, s
    :param float horizon: End of the run, s
    :return: Events in request order
    :rtype: List[RenderEvent]
    """
    validate_rates(camera_rate, render_rate, latency)
    events = []
    k = 0
    while k / render_rate < horizon - 1e-9:
        request = k / render_rate
        events.append(RenderEvent(k, request, request + latency))
        k += 1
    logger.debug(f"Scheduled {len(events)} renders over {horizon} s")
    return events
