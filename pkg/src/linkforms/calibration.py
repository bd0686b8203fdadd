"""Frozen sign-calibration constants.

Each numerical backend computes a natural quantity from its own orientation
conventions and then multiplies by one constant recorded here.  The constants
were fixed once against two anchors and are re-derived by the test-suite:

* ``torus_biot_savart``: the transverse-disk probe around a small positively
  oriented circle must return +1.
* ``gauss_integral`` and ``torus_pairing``: the Hopf pair
  (cos s, sin s, 0), (cos t + 1, 0, sin t) must reproduce the signed crossing
  count of a generic planar projection (right-handed crossings count +1).
"""

SIGN_CONSTANTS = {
    "torus_biot_savart": 1,
    "gauss_integral": -1,
    "torus_pairing": 1,
}


def sign_constant(name: str) -> int:
    return SIGN_CONSTANTS[name]
