"""
CJ 算子与信道
"""
