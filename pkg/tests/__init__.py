# ABOUTME: Test suite for rwre-lab.
# ABOUTME: Library tests at the top level, experiment harness tests under harness/.
