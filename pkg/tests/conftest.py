"""Shared oracles and fixtures: finite differences, random nets, report hook."""

import numpy as np
import pytest

from devimplicit.mlp import MlpParams, NetworkConfig, init_mlp


def rel_err(got, ref, floor=1e-10):
    got = np.asarray(got, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    return np.max(np.abs(got - ref)) / max(np.max(np.abs(ref)), floor)


def fd_gradient(f, p, h=1e-5):
    """Central-difference gradient of scalar f at 3-point p."""
    p = np.asarray(p, dtype=np.float64)
    g = np.zeros(3)
    for i in range(3):
        e = np.zeros(3)
        e[i] = h
        g[i] = (f(p + e) - f(p - e)) / (2 * h)
    return g


def fd_hessian(f, p, h=1e-4):
    """Central second differences of scalar f at 3-point p."""
    p = np.asarray(p, dtype=np.float64)
    hess = np.zeros((3, 3))
    f0 = f(p)
    for i in range(3):
        ei = np.zeros(3)
        ei[i] = h
        hess[i, i] = (f(p + ei) - 2 * f0 + f(p - ei)) / (h * h)
        for j in range(i + 1, 3):
            ej = np.zeros(3)
            ej[j] = h
            hess[i, j] = hess[j, i] = (
                f(p + ei + ej) - f(p + ei - ej) - f(p - ei + ej) + f(p - ei - ej)
            ) / (4 * h * h)
    return hess


def flat_params(params):
    return np.concatenate([a.ravel() for a in params.weights + params.biases])


def set_flat_params(params, vec):
    out = params.copy()
    k = 0
    for arr in out.weights + out.biases:
        arr[...] = vec[k:k + arr.size].reshape(arr.shape)
        k += arr.size
    return out


def fd_param_gradient(loss_fn, params, h=1e-6):
    """Central differences of scalar loss over every network parameter."""
    theta = flat_params(params)
    g = np.zeros_like(theta)
    for k in range(theta.size):
        up = theta.copy()
        up[k] += h
        dn = theta.copy()
        dn[k] -= h
        g[k] = (loss_fn(set_flat_params(params, up)) - loss_fn(set_flat_params(params, dn))) / (2 * h)
    return g


def random_net(depth, width, activation, seed, scale=1.0):
    params = init_mlp(NetworkConfig(depth=depth, width=width, activation=activation, seed=seed))
    if scale != 1.0:
        for w in params.weights:
            w *= scale
    return params


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


# Acceptance reporting: collect one line per criterion test and print a summary.
_ACCEPT_RESULTS = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call" and item.name.startswith("test_criterion"):
        _ACCEPT_RESULTS[item.name] = rep.passed


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPT_RESULTS:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for name in sorted(_ACCEPT_RESULTS):
        status = "PASS" if _ACCEPT_RESULTS[name] else "FAIL"
        terminalreporter.write_line(f"{name}: {status}")
