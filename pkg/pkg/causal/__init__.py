"""
因果结构与分类
"""
