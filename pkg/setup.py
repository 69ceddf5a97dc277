#!/usr/bin/env python3
import pathlib

from setuptools import setup

HERE = pathlib.Path(__file__).parent

# The text of the README file
README = (HERE / "README.md").read_text()

setup(
    name="fcn-texton-forest",
    description="Brain tumor segmentation of FLAIR/T1c/T2 MRI with FCN scores, texton features and a random forest",
    long_description=README,
    long_description_content_type="text/markdown",
    license="AGPL-3.0",
    version="2026.1",
    packages=[
        "fcn_texton_forest",
        "fcn_texton_forest.kaitai",
        "fcn_texton_forest.lib",
        "fcn_texton_forest.tests",
    ],
    zip_safe=False,
    scripts=["bin/fcn-texton-forest.py"],
    keywords="mri brain tumor segmentation fcn texton gabor random forest",
    python_requires=">=3.8",
    install_requires=[
        "configparser>=5.0.1",
        "kaitaistruct>=0.9",
        "matplotlib>=3.3",
        "numpy>=1.22",
        "scipy>=1.6",
    ],
    classifiers=[
        "Development Status :: 3 - Alpha",
        "License :: OSI Approved :: GNU Affero General Public License v3 or later (AGPLv3+)",
        "Environment :: Console",
        "Topic :: Scientific/Engineering :: Medical Science Apps.",
        "Topic :: Scientific/Engineering :: Image Recognition",
        "Operating System :: POSIX :: Linux",
        "Typing :: Typed",
        "Framework :: Pytest",
        "Intended Audience :: Science/Research",
        "Natural Language :: English",
        "Programming Language :: Python :: 3.8",
    ],
)
