from setuptools import setup, find_packages

setup(
    name="bianm",
    version="0.1.0",
    packages=find_packages(where="src"),
    package_dir={"": "src"},
    python_requires=">=3.9",
    install_requires=[
        "numpy>=1.24",
        "scipy>=1.10",
        "pandas>=2.0",
        "pydantic>=2.5",
        "rich>=13.7",
        "typer>=0.20",
        "python-dotenv>=1.0",
    ],
    extras_require={
        "dev": ["pytest"],
        "reference": ["cvxpy>=1.4"],
    },
    entry_points={"console_scripts": ["bianm=bianm.main:app"]},
)
