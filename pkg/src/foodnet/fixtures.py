"""Published ten-class food-recognition results, used as metric oracles.

Rows are true classes, columns predicted classes, both in ``FOOD_CLASSES``
order.  ``*_RR`` are the per-class recognition rates printed under each
matrix (two decimals).
"""
import numpy as np

FOOD_CLASSES = ["Apple", "Banana", "Broccoli", "Burger", "Egg",
                "Frenchfry", "Hotdog", "Pizza", "Rice", "Strawberry"]

# images per category in the full collection
FOOD_CLASS_COUNTS = [1050, 310, 327, 519, 626, 296, 639, 1248, 352, 455]

BOF_CONFUSION = np.array([
    [178, 1, 0, 4, 8, 0, 2, 6, 5, 7],
    [2, 43, 1, 2, 4, 4, 5, 2, 1, 1],
    [1, 0, 28, 2, 0, 3, 2, 24, 1, 4],
    [5, 0, 2, 72, 2, 2, 7, 12, 1, 1],
    [20, 1, 2, 7, 75, 1, 6, 6, 6, 1],
    [1, 4, 3, 4, 1, 21, 6, 16, 1, 0],
    [5, 8, 4, 10, 4, 9, 76, 10, 2, 1],
    [5, 0, 4, 5, 1, 1, 7, 221, 3, 4],
    [6, 1, 1, 2, 4, 1, 1, 18, 35, 1],
    [11, 1, 2, 1, 1, 0, 1, 29, 1, 45],
], dtype=np.int64)
BOF_RR = [0.89, 0.82, 0.71, 0.83, 0.79, 0.67, 0.78, 0.87, 0.74, 0.73]
BOF_MEAN_RR = 0.78

CNN_CONFUSION = np.array([
    [193, 6, 1, 0, 1, 0, 2, 1, 0, 6],
    [4, 49, 0, 0, 4, 2, 3, 0, 0, 0],
    [0, 0, 64, 0, 0, 0, 1, 1, 0, 0],
    [1, 0, 0, 87, 0, 1, 9, 6, 0, 0],
    [3, 1, 0, 2, 110, 2, 5, 1, 2, 0],
    [0, 2, 0, 0, 0, 53, 1, 4, 0, 0],
    [1, 2, 0, 5, 0, 3, 109, 8, 0, 0],
    [0, 0, 0, 3, 0, 1, 6, 239, 0, 1],
    [0, 0, 0, 1, 0, 0, 1, 5, 64, 0],
    [3, 0, 0, 0, 0, 0, 0, 0, 0, 88],
], dtype=np.int64)
CNN_RR = [0.95, 0.89, 0.98, 0.91, 0.93, 0.94, 0.91, 0.96, 0.95, 0.98]
CNN_MEAN_RR = 0.94
