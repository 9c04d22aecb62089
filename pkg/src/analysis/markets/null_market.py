# null_market.py

MARKET_SCENARIOS = {
    "null": {
        "description": "Normal accounts only: no manipulators, no abnormal prices.",
        "market": {
            "days": 120,
            "n_normal": 120,
            "n_manipulator": 0,
            "normal_rate": 30.0,
            "kappa": 0.0,
            "p_abnormal": 0.0,
            "churn_edges": 0,
            "seed": 1,
        },
    },
}
