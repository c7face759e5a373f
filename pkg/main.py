"""
因果结构分析与因果忠实分解的命令行主程序
"""
import sys

from pkg.cli.cli import main

if __name__ == "__main__":
    sys.exit(main())
