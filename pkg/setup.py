#!/usr/bin/env python
# -*- coding: utf-8 -*-


def main():
    from setuptools import setup

    ver_dic = {}
    exec(
        compile(
            open("pyzerowait/__init__.py").read(), "pyzerowait/__init__.py", "exec"
        ),
        ver_dic,
    )

    setup(
        name="pyzerowait",
        # metadata
        version=ver_dic["VERSION_TEXT"],
        description="Zero-waiting load balancing: simulation, steady-state "
        "bounds, fluid limits and exact solutions",
        long_description=open("README.rst", "rt").read(),
        author="The pyzerowait developers",
        license="MIT",
        classifiers=[
            "Environment :: Console",
            "Development Status :: 4 - Beta",
            "Intended Audience :: Science/Research",
            "License :: OSI Approved :: MIT License",
            "Natural Language :: English",
            "Programming Language :: Python",
            "Programming Language :: Python :: 3",
            "Topic :: Scientific/Engineering",
            "Topic :: Scientific/Engineering :: Mathematics",
        ],
        # build info
        packages=["pyzerowait"],
        python_requires="~=3.8",
        install_requires=[
            "numpy>=1.19",
            "scipy>=1.6",
            "pytools>=2022.1",
            "appdirs>=1.4.0",
        ],
        extras_require={
            "test": ["pytest>=2"],
        },
        entry_points={
            "console_scripts": ["pyzerowait = pyzerowait.cli:main"],
        },
        zip_safe=False,
    )


if __name__ == "__main__":
    main()
