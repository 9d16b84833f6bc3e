from setuptools import setup
setup(name='seqstats', install_requires=['tqdm>=4'])
