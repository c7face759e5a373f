"""
因果结构分析与扩展线路合成工具包
"""
