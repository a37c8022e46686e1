import math

from .exceptions import NegativeDiscriminant


def quadratic_roots(a, b, c, disc_tol=0.0, linear_tol=0.0):
    """Real roots of ``a x**2 + b x + c`` in ascending order.

    A discriminant in ``[-disc_tol, 0)`` is clamped to zero (double root);
    below that :class:`NegativeDiscriminant` is raised.  When ``|a| <=
    linear_tol`` the equation is treated as linear.  Roots come from the
    cancellation-free pair ``q / a`` and ``c / q``.
    """
    if abs(a) <= linear_tol:
        if b == 0.0:
            return []
        return [-c / b]
    disc = b * b - 4.0 * a * c
    if disc < 0.0:
        if disc < -disc_tol:
            raise NegativeDiscriminant(disc, disc_tol)
        disc = 0.0
    q = -0.5 * (b + math.copysign(math.sqrt(disc), b))
    if q == 0.0:
        return [0.0, 0.0]
    return sorted([q / a, c / q])
