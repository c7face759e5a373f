"""
异常包
"""
