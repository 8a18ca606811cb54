"""Packaging for plformer, MIT License"""


from setuptools import find_packages
from setuptools import setup


REQUIRED_PACKAGES = [
    'tensorflow>=2.9',
    'numpy',
    'scipy>=1.6',
    'matplotlib']


setup(
    name='plformer',
    version='0.1',
    install_requires=REQUIRED_PACKAGES,
    extras_require={'tests': ['pytest']},
    include_package_data=True,
    packages=[p for p in find_packages() if p.startswith('plformer')],
    entry_points={'console_scripts': ['plformer=plformer.cli:main']},
    description='mmWave link-level path loss with a variable-height transformer in TensorFlow 2')
