import math

import numpy as np

from ssdp.instance import DemandZone, FacilitySpec, Instance
from ssdp.queueing import LocationScaleSpec

MM1 = LocationScaleSpec((0.0, 1.0))


def facility(i=1, ec=10.0, sc=1.0, wc=4.0, m=0.0, M=math.inf, deltas=(0.0, 1.0)):
    return FacilitySpec(i, ec, sc, wc, m, M, LocationScaleSpec(tuple(deltas)))


def make_instance(facs, lams, tc, d=None):
    zones = tuple(DemandZone(j + 1, float(l)) for j, l in enumerate(lams))
    return Instance(tuple(facs), zones, np.asarray(tc, dtype=float), None if d is None else np.asarray(d, dtype=float))
