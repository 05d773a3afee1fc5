# Пакет обработчиков проектирования 3-RRS
from .atlas import atlas_command
from .optimize import optimize_command
