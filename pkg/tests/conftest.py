import os


def pytest_configure(config):
    # worker count must not leak in from the environment; determinism tests
    # set it explicitly through monkeypatch
    os.environ.pop("SMALLBALL_THREADS", None)
