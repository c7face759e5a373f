"""
*-代数块分解
"""
