"""Integration tests for ciphertrend"""