GREEN = "\033[92m"
ORANGE = "\033[93m"
RED = "\033[91m"
END = "\033[0m"

# test durations in milliseconds
SLOW_MS = 1000
VERY_SLOW_MS = 10000


def paint(code, text):
    return f"{code}{text}{END}"


def for_duration(milliseconds):
    if milliseconds > VERY_SLOW_MS:
        return RED
    if milliseconds > SLOW_MS:
        return ORANGE
    return GREEN
