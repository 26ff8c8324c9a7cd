import collections
import logging
import sys
from typing import Dict, List

CONSOLE_FORMAT = '%(asctime)s %(levelname)-8s [%(name)s:%(module)s:%(lineno)d] - %(message)s'


class MemoryLogHandler(logging.Handler):
    """
    将日志记录缓存在内存中，运行结束后写入 manifest。

    只保留 level / name / message，不含时间戳，保证相同配置的两次运行产物逐字节一致。
    """
    def __init__(self, capacity=1000, level=logging.WARNING):
        super().__init__(level=level)
        self.log_buffer = collections.deque(maxlen=capacity)

    def emit(self, record):
        try:
            self.log_buffer.append({
                "level": record.levelname,
                "name": record.name,
                "message": record.getMessage(),
            })
        except Exception:
            self.handleError(record)

    def get_logs(self, limit=100) -> List[Dict[str, str]]:
        """获取最近的日志"""
        return list(self.log_buffer)[-limit:]

    def clear(self):
        self.log_buffer.clear()


# 全局实例
memory_log_handler = MemoryLogHandler()


def setup_logging(level_name: str) -> None:
    """配置根日志记录器：控制台 + 内存缓冲。重复调用不会叠加 handler。"""
    numeric_level = getattr(logging, level_name.upper(), logging.INFO)
    root_logger = logging.getLogger()
    root_logger.setLevel(numeric_level)

    # 控制台 handler 总是绑定调用时的 sys.stderr
    for handler in [h for h in root_logger.handlers if getattr(h, "_lattice_kreg_console", False)]:
        root_logger.removeHandler(handler)
    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setFormatter(logging.Formatter(CONSOLE_FORMAT, datefmt="%Y-%m-%d %H:%M:%S"))
    console_handler._lattice_kreg_console = True
    root_logger.addHandler(console_handler)
    if memory_log_handler not in root_logger.handlers:
        root_logger.addHandler(memory_log_handler)

    for lib_logger_name in ["PIL", "numba", "matplotlib"]:
        logging.getLogger(lib_logger_name).setLevel(logging.WARNING)
