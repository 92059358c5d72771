"""Rebuild wdbc.data (UCI layout: id, diagnosis M/B, 30 features) from the
copy of the Wisconsin Diagnostic Breast Cancer set bundled with scikit-learn.

The bundled copy drops the patient ids, so rows get sequential ids.
"""
import csv
import os
import sys

import sklearn

src = os.path.join(os.path.dirname(sklearn.__file__), "datasets", "data", "breast_cancer.csv")
dst = sys.argv[1] if len(sys.argv) > 1 else os.path.join(os.path.dirname(__file__), "wdbc.data")

with open(src) as f, open(dst, "w", newline="") as out:
    rows = csv.reader(f)
    next(rows)  # "569,30,malignant,benign"
    w = csv.writer(out, lineterminator="\n")
    for i, row in enumerate(rows):
        # sklearn target: 0 = malignant, 1 = benign
        diagnosis = "M" if row[-1] == "0" else "B"
        w.writerow([100000 + i, diagnosis] + row[:-1])
