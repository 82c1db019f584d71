"""
Target-aligned offline reinforcement learning.
"""
__version__ = "1.0.0"
