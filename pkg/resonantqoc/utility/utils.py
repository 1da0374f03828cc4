import warnings

import pandas as pd

from resonantqoc.utility.general_utils import set_seed


def project_setup(seed: int = 0):
    warnings.simplefilter(action='ignore', category=FutureWarning)
    pd.set_option('display.max_rows', 40)
    pd.set_option('display.max_columns', 20)
    pd.set_option('display.precision', 12)
    set_seed(seed)
