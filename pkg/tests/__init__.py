"""Test suite for ciphertrend"""