"""Fair sequential allocation from a capacity-limited store."""
