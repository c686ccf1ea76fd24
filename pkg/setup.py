import os

from setuptools import setup


# =============================================================================
# Package metadata
# =============================================================================

HERE = os.path.dirname(os.path.abspath(__file__))


def read_long_description():
    path = os.path.join(HERE, 'README.md')
    if not os.path.exists(path):
        return ''
    with open(path, encoding='utf-8') as f:
        return f.read()


setup(
    name='affordlab',
    version='0.1.0',
    description='Learning multi-object effects with graph networks and planning compound builds',
    long_description=read_long_description(),
    long_description_content_type='text/markdown',
    author='AffordLab Team',
    packages=['affordlab'],
    scripts=['cli.py'],
    py_modules=['cli'],
    entry_points={
        'console_scripts': [
            'affordlab=cli:main',
        ],
    },
    install_requires=[
        'numpy>=1.22',
        'matplotlib>=3.5',
    ],
    extras_require={
        'test': ['pytest>=7.0'],
    },
    classifiers=[
        'Development Status :: 3 - Alpha',
        'Intended Audience :: Science/Research',
        'License :: OSI Approved :: MIT License',
        'Programming Language :: Python :: 3',
        'Programming Language :: Python :: 3.8',
        'Programming Language :: Python :: 3.9',
        'Programming Language :: Python :: 3.10',
        'Programming Language :: Python :: 3.11',
        'Topic :: Scientific/Engineering :: Artificial Intelligence',
    ],
    python_requires='>=3.8',
    keywords='robotics affordance graph neural network planning simulation',
)
