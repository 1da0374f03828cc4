"""Sets up the project."""

import pathlib

from setuptools import find_packages, setup

CWD = pathlib.Path(__file__).absolute().parent


def get_version():
    """Gets the resonantqoc version."""
    path = CWD / "resonantqoc" / "__init__.py"
    content = path.read_text()

    for line in content.splitlines():
        if line.startswith("__version__"):
            return line.strip().split()[-1].strip().strip('"')
    raise RuntimeError("bad version data in __init__.py")


def get_requirements():
    lines = (CWD / "requirements.txt").read_text().splitlines()
    return [line.strip() for line in lines if line.strip() and not line.startswith("#") and line.strip() != "pytest"]


setup(
    name="resonantqoc",
    version=get_version(),
    packages=find_packages(exclude=["tests"]),
    package_data={"resonantqoc": ["fixtures/*.json"]},
    install_requires=get_requirements(),
    extras_require={"test": ["pytest"]},
    python_requires=">=3.8",
)
