"""
日志包
"""
