"""
命令行：analyze / decompose / verify / generate / eval / dual
"""
