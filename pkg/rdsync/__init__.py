# rdsync: synchronization by noise for SDEs with additive noise
__version__ = "0.1.0"
