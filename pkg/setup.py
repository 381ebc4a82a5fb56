from setuptools import setup, find_packages


setup(
    name="spectrum_demod",
    version="0.1",
    packages=find_packages(exclude=["tests"]),
    install_requires=["astropy", "numpy", "scipy", "matplotlib", "pyyaml"],
    extras_require={"test": ["pytest"]},
    entry_points={
        "console_scripts": ["spectrum-demod = spectrum_demod.__main__:main"],
    },
)
