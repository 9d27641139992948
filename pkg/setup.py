from setuptools import setup

readme = """Monte Carlo simulator and bounds library for limited-feedback
multiuser MIMO downlink with channel-statistics-based codebooks.
"""

setup(
    name='mimo_feedback',
    version='1.0.0',
    packages=['mimo_feedback'],
    description='Limited-feedback multiuser MIMO simulator and bounds',
    long_description=readme,
    include_package_data=True,
    install_requires=[
        'numpy>=1.17',
        'scipy>=1.4',
        'traitlets',
        'future'
    ],
    extras_require={
        'test': ['hypothesis'],
    },
    entry_points={
        'console_scripts': ['mimo_feedback=mimo_feedback.cli:main'],
    },
    classifiers=[
        'Development Status :: 4 - Beta',
        'License :: OSI Approved :: Apache Software License',
        'Programming Language :: Python :: 3',
        'Operating System :: POSIX :: Linux',
        'Intended Audience :: Education',
        'Intended Audience :: Science/Research',
        'Topic :: Scientific/Engineering'
    ],
)
