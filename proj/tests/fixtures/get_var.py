import numpy as np

def get_var(data):
    mean = np.mean(data)
    var = sum([np.power(x - mean, 2) for x in data]) / len(data)
    return var
