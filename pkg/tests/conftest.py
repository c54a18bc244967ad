import numpy as np
import pytest

from evigrid.sensors import LidarSensor, SensorReading


@pytest.fixture
def small_lidar():
    # 8 rows looking mostly downward so ground is visible close by.
    return LidarSensor(rows=8, cols=90, fov_up_deg=2.0, fov_down_deg=-24.0,
                      origin=(0.0, 0.0, 1.7))


def make_reading(sensor, range_image, semantic=None, confidence=None):
    return SensorReading(sensor=sensor, range_image=np.asarray(range_image, float),
                         semantic=semantic, confidence=confidence)
