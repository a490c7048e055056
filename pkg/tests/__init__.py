# Test suite for regvar-bench
