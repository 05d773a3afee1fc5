# Пакет handlers
