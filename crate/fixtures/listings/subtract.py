def gptFunction(a, b):
    return a - b
