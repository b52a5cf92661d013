from setuptools import setup, find_packages

setup(
    name="sasvfusion",
    version="0.1.0",
    packages=find_packages(exclude=["tests", "tests.*"]),
    install_requires=[
        "numpy>=1.21",
        "pandas>=1.5",
        "scikit-learn>=1.0",
        "joblib>=1.1",
    ],
    extras_require={
        "test": ["pytest>=7"],
    },
    entry_points={
        "console_scripts": [
            "sasvfusion=sasvfusion.cli:main",
        ],
    },
    author="virseli",
    author_email="your.email@example.com",
    description="Spoofing-aware speaker verification fusion head with gated integration and alternating training",
    long_description=open("README.md").read(),
    long_description_content_type="text/markdown",
    url="",
    classifiers=[
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
    ],
    python_requires=">=3.8",
)
