"""
实例生成：Haar 随机幺正、指定因果结构的随机实例、各合成类的模板实例与具名例子
"""
