# Пакет обработчиков обучения и оценки
from .train import train_command
from .evaluate import eval_command
from .ablate import ablate_command
from .curves import curves_command
