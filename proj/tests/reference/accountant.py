# Copyright 2026 The safe-dshb Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     https://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Independent 50-digit evaluation of the without-replacement RDP accountant.

Produces the reference numbers pinned in test_privacy.cpp. Needs mpmath.
The order search is a plain integer scan followed by a 4000-point real scan
around the best integer, so it shares nothing with the library's search.
"""
import math
from functools import lru_cache

from mpmath import binomial, exp, log, mp, mpf

mp.dps = 50


@lru_cache(None)
def eps_int(a, r, s):
    # s = Delta / sigma
    e = lambda j: mpf(s) * s * j / 2
    e2 = e(2)
    t = 1 + mpf(r) ** 2 * binomial(a, 2) * min(4 * (exp(e2) - 1), 2 * exp(e2))
    for j in range(3, a + 1):
        t += 2 * mpf(r) ** j * binomial(a, j) * exp((j - 1) * e(j))
    return float(log(t) / (a - 1))


def eps_real(al, r, s):
    fl, ce = math.floor(al), math.ceil(al)
    if fl == al:
        return eps_int(int(al), r, s)
    v = 0.0
    if fl >= 2:
        v += (1 - al + fl) * (fl - 1) / (al - 1) * eps_int(fl, r, s)
    v += (al - fl) * (ce - 1) / (al - 1) * eps_int(ce, r, s)
    return v


def eps_star(m, s, T=400, b=25, delta=1e-4, max_int=120):
    r = b / m
    obj = lambda a: T * eps_real(a, r, s) + math.log(1 / delta) / (a - 1)
    best = min((obj(a), a) for a in range(2, max_int))
    a0 = best[1]
    lo, hi = max(1.0001, a0 - 1), a0 + 1
    n = 4000
    return min(best, min((obj(lo + (hi - lo) * k / n), lo + (hi - lo) * k / n) for k in range(n + 1)))


def calibrate_nm(target, m):
    lo, hi = 0.5, 20.0
    for _ in range(40):
        mid = math.sqrt(lo * hi)
        if eps_star(m, 1 / mid)[0] > target:
            lo = mid
        else:
            hi = mid
    return mid


if __name__ == "__main__":
    for m in (1263, 1579, 8844):
        print(m, [eps_star(m, 1 / nm)[0] for nm in (1, 2, 3)])
    print("calibrated sigma_nm for eps 1.14, m 1263:", calibrate_nm(1.14, 1263))
    # sigma_dp = 1e6 * Delta: the e^{(j-1)eps(j)} factors are ~1, the 2 r^j C(a,j)
    # mass is not, so eps* stays bounded away from zero.
    print("floor at sigma = 1e6 Delta, m 1263:", eps_star(1263, 1e-6))
