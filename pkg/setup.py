from setuptools import setup

setup(
    name="nru-coexist",
    setup_requires="setupmeta",
    versioning="dev",
    author="Zoran Simic zoran@simicweb.com",
    keywords="nr-u, wifi, coexistence, lbt, resource allocation, unlicensed spectrum",
    python_requires=">=3.8",
    install_requires=["click~=8.0", "numpy>=1.22", "pyyaml~=6.0", "runez~=5.0.0", "scipy>=1.8"],
    entry_points={
        "console_scripts": [
            "nru-coexist = nru_coexist.__main__:main",
        ],
    },
    classifiers=[
        "Development Status :: 4 - Beta",
        "Environment :: Console",
        "Intended Audience :: Science/Research",
        "Intended Audience :: Telecommunications Industry",
        "Operating System :: OS Independent",
        "Programming Language :: Python",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Programming Language :: Python :: 3.12",
        "Programming Language :: Python :: Implementation :: CPython",
        "Topic :: Scientific/Engineering",
        "Topic :: System :: Networking",
        "Topic :: Utilities",
    ],
)
