# rdsync.core
