"""
扩展线路图
"""
