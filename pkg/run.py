#!/usr/bin/env python3
"""
lattice_kreg 命令行启动脚本
"""
import os
import sys
import logging
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

# 添加项目根目录到Python路径
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from lattice_kreg.main import run

logger = logging.getLogger("LatticeKReg.Runner")


def main():
    """运行一个子命令，退出码与 lattice_kreg.main.run 一致"""
    try:
        code = run(sys.argv[1:])
    except KeyboardInterrupt:
        logger.info("Run interrupted by user (Ctrl+C)")
        code = 130
    except Exception as e:
        logger.error(f"Unexpected failure: {e}", exc_info=True)
        print(f"error: internal: {e}", file=sys.stderr)
        code = 1
    sys.exit(code)


if __name__ == "__main__":
    main()
