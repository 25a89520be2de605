import numpy as np
import pytest

from lpreg import Problem, generate_instance


@pytest.fixture
def one_dim():
    # F(t) = (t - 2)^2 + sqrt(|t|); local minima at 0 and t* ~ 1.8144
    return Problem(A=[[1.0]], b=[2.0], lam=1.0, p=0.5)


@pytest.fixture
def small_instance():
    prob, planted = generate_instance(seed=1, m=20, n=50, s=5, noise=0.0,
                                      lam=0.1, p=0.5)
    return prob, planted


def scalar_newton_oracle(a, bhat, lam, p, t0):
    """Independent root solve of 2 a (a t - bhat) + lam p t^(p-1) = 0."""
    t = t0
    for _ in range(300):
        g = 2.0 * a * (a * t - bhat) + lam * p * t ** (p - 1.0)
        h = 2.0 * a * a + lam * p * (p - 1.0) * t ** (p - 2.0)
        t_new = t - g / h
        if t_new <= 0.0:
            t_new = 0.5 * t
        if abs(t_new - t) <= 1e-15 * abs(t):
            return t_new
        t = t_new
    return t


@pytest.fixture
def one_dim_tstar():
    return scalar_newton_oracle(1.0, 2.0, 1.0, 0.5, t0=2.0)


def random_problem(rng, m, n, lam=1.0, p=0.5):
    A = rng.standard_normal((m, n)) / np.sqrt(m)
    b = rng.standard_normal(m)
    return Problem(A=A, b=b, lam=lam, p=p)
