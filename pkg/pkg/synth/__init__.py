"""
合成模块
配方（recipes）、执行器（engine）、分派入口（synth）与梳状重连（comb）
"""
