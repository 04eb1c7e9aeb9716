"""
Decentralized online Frank-Wolfe simulator.
"""
