# rdsync.runtime
