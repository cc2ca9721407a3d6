"""
Balancing weights and the four-cell identity
============================================

Overlap and inverse-probability weights both balance the four
(treatment, censoring-status) cells: at every covariate value the
product of cell probability and cell weight is the same constant across
all four cells. This script verifies the identity numerically and shows
what the common product is for each weight family.
"""

import numpy as np
from scipy.special import expit

from critr.weights import (
    check_balancing,
    ipw_weight_function,
    overlap_weight_function,
)

# A one-dimensional toy model: b(x) is the propensity P(A=1|x) and
# c(a, x) the event probability P(Delta=1|a,x).


def b(x):
    return expit(0.4 + 0.9 * np.asarray(x))


def c(a, x):
    return expit(1.1 - 0.7 * np.asarray(x) + 0.3 * a)


xs = np.random.default_rng(0).normal(size=1000)

# check_balancing evaluates the four products
#   [1-c(0,x)][1-b(x)] w(0,0,x),  c(0,x)[1-b(x)] w(1,0,x),
#   [1-c(1,x)] b(x)    w(0,1,x),  c(1,x) b(x)    w(1,1,x)
# and reports the largest spread among them over the sample.
overlap = overlap_weight_function(b, c)
ipw = ipw_weight_function(b, c)
print("overlap spread:", check_balancing(overlap, b, c, xs))
print("ipw spread:    ", check_balancing(ipw, b, c, xs))

# The common product identifies the implied target population. For the
# overlap weights it is b(x)[1-b(x)], which peaks where the treatment
# groups overlap most; for IPW it is the constant 1.
x0 = 0.3
product_overlap = c(1, x0) * b(x0) * overlap(1, 1, x0)
product_ipw = c(1, x0) * b(x0) * ipw(1, 1, x0)
print(f"overlap product at x={x0}: {product_overlap:.6f}"
      f"  (b(1-b) = {b(x0) * (1 - b(x0)):.6f})")
print(f"ipw product at x={x0}:     {product_ipw:.6f}")

# Unit weights do not balance: the spread stays far from zero.
print("unit-weight spread:", check_balancing(lambda d, a, x: 1.0, b, c, xs))
