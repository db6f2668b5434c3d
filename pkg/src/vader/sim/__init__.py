from .kernel import TIMEOUT, EventQueue, Future, Process, Simulator, ms

__all__ = ["TIMEOUT", "EventQueue", "Future", "Process", "Simulator", "ms"]
