from setuptools import setup, find_packages

setup(
    name="teamform",
    version="1.0.0",
    packages=find_packages(exclude=["tests", "tests.*"]),
    scripts=["teamform-cli.py"],

    # Metadata
    description="Team formation mechanisms with size constraints, welfare and fairness evaluation",
    long_description=open("README.md").read(),
    long_description_content_type="text/markdown",
    classifiers=[
        "Development Status :: 4 - Beta",
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.8",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Topic :: Scientific/Engineering :: Mathematics",
    ],
    keywords="team formation, hedonic games, mechanism design, serial dictatorship, draft, ceei",

    # Requirements
    python_requires=">=3.8",
    install_requires=[
        "numpy>=1.20",
        "scipy>=1.6",
        "pandas>=1.2",
    ],
    extras_require={
        "tests": ["pytest>=7.0"],
    },

    # Entry points for console scripts
    entry_points={
        "console_scripts": [
            "teamform=teamform.cli:main",
        ],
    },
)
