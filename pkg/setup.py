from setuptools import setup, find_packages

setup(
    name='splitquant',
    version='0.1.0',
    description='Cluster-based layer splitting and low-bit affine quantization on the CPU',
    long_description=open('README.md').read(),
    long_description_content_type='text/markdown',
    package_dir={'': 'src'},
    packages=find_packages(where='src'),
    python_requires='>=3.8',
    install_requires=[
        'numpy>=1.22',
        'psutil>=5.9',
    ],
    entry_points={
        'console_scripts': [
            'splitquant=cli.commands:main',
        ],
    },
    license='MIT',
)
