"""
张量与子系统记账
"""
