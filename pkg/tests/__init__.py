"""
Test suite for delayguard.

Unit tests against closed-form solutions, integration tests over the
bundled samples, and property-based tests.
"""
