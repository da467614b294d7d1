import os
import sys

import structlog

SLOG = structlog.get_logger(__name__)


def tests_root() -> str:
    import airylink

    package_dir = os.path.dirname(os.path.abspath(airylink.__file__))
    return os.path.join(os.path.dirname(package_dir), "tests")


def run_self_test(workspace_root: str) -> int:
    _validate_python_installation()

    import pytest

    path = os.path.join(workspace_root, "build", "XUnitXML", "PyTest.xml")
    path = os.path.abspath(path)
    os.makedirs(os.path.dirname(path), exist_ok=True)

    args = ["--junit-xml", path, tests_root()]
    SLOG.info("Running pytest.", args=args)
    return int(pytest.main(args))


def _python_version_string():
    return ".".join(map(str, sys.version_info))[0:5]


def _validate_python_installation():
    if not sys.version_info >= (3, 8):
        raise OSError(
            f"Detected Python version {_python_version_string()} less than 3.8. Please"
            " recreate the virtualenv with a newer interpreter."
        )
