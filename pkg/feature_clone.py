#!/usr/bin/env python
"""
Feature clone: the virtual right features are a copy of the left features
No depth or disparity input is involved.
"""
import numpy as np

from core_types import FeatureMap


def clone_features(f_left: FeatureMap) -> FeatureMap:
    """Independent, bit-identical copy"""
    return FeatureMap(np.array(f_left.data, copy=True))
