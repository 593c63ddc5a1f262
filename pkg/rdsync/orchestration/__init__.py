# rdsync.orchestration
