"""Rebuild datasets/wdbc.data from the copy of WDBC bundled with scikit-learn.

scikit-learn drops the original patient ids; rows get sequential ids instead.
The 30 feature columns are in the same order as the UCI file.
"""
import csv
import os
import sys

import sklearn

src = os.path.join(os.path.dirname(sklearn.__file__), "datasets", "data", "breast_cancer.csv")
dst = sys.argv[1] if len(sys.argv) > 1 else "src/chipmh/datasets/wdbc.data"

with open(src) as fh, open(dst, "w") as out:
    reader = csv.reader(fh)
    next(reader)
    for i, row in enumerate(reader):
        # sklearn target: 0 = malignant, 1 = benign
        diag = "M" if row[-1] == "0" else "B"
        out.write(",".join([str(900000 + i), diag] + row[:-1]) + "\n")
