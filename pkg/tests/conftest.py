import os
import sys

import pytest

# --- PATH SETUP TO IMPORT CORE ---
current_dir = os.path.dirname(os.path.abspath(__file__))
src_dir = os.path.join(os.path.dirname(current_dir), "src")
sys.path.append(src_dir)
sys.path.append(os.path.join(src_dir, "analysis"))

from core import synth


TABLE_I_SAMPLE = """Trade_Id,Date,User_Id,Type,Currency,Bitcoins,Money,User_Country,User_State
1380587338975940,2013/10/1 0:28:58,125439,buy,USD,0.5,71.69169,US,NC
1380587338975940,2013/10/1 0:28:58,295701,sell,USD,0.5,71.69169,CA,QC
1380739642844790,2013/10/2 18:47:22,609336,buy,USD,0.26177217,33.96631,US,PA
1380739642844790,2013/10/2 18:47:22,36865,sell,USD,0.26177217,33.96631,US,CA
"""


@pytest.fixture
def table_i_path(tmp_path):
    path = tmp_path / "trades.csv"
    path.write_text(TABLE_I_SAMPLE, encoding="utf-8")
    return path


@pytest.fixture(scope="session")
def motif_market():
    """30 days, one of each motif planted every day, every manipulator trade abnormal."""
    cfg = synth.MarketConfig(days=30, n_normal=60, n_manipulator=24, churn_edges=30, p_abnormal=1.0, motif_every=1, seed=1)
    log, reference, truth = synth.generate_market(cfg)
    return cfg, log, reference, truth


@pytest.fixture(scope="session")
def motif_market_files(tmp_path_factory, motif_market):
    cfg, log, reference, truth = motif_market
    out = tmp_path_factory.mktemp("motif_market")
    return synth.write_market(log, reference, truth, str(out), cfg)
