"""Straight-line scalar PEM written without numpy or any package code.

Used as an independent second implementation of the recursion.
"""


def pem_scalar(f, g, xi, tau, M, N, dW, alpha):
    """Return [X(t_-M), ..., X(t_N)] for a scalar problem."""
    h = tau / M
    R = h ** (-alpha)

    def bar(v):
        a = abs(v)
        if a <= R:
            return v
        return v * (R / a)

    X = [xi(n * h) for n in range(-M, 1)]
    for i in range(1, N + 1):
        # stored index of node n is n + M
        xp = bar(X[i - 1 + M])
        xd = bar(X[i - M + M])
        X.append(xp + h * f(xp, xd) + g(xp, xd) * dW[i - 1])
    return X
