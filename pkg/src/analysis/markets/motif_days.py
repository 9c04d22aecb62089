# motif_days.py

MARKET_SCENARIOS = {
    "motif_days": {
        "description": "A short market planting one of each motif on every day.",
        "market": {
            "days": 30,
            "n_normal": 60,
            "n_manipulator": 24,
            "churn_edges": 30,
            "p_abnormal": 1.0,
            "motif_every": 1,
            "seed": 1,
        },
    },
    "single_selfloop": {
        "description": "One manipulator trading with itself 50 times on day 3.",
        "market": {
            "days": 10,
            "n_normal": 40,
            "n_manipulator": 6,
            "churn_edges": 8,
            "p_abnormal": 1.0,
            "motif_schedule": [{"day": 3, "pattern": "SelfLoop", "accounts": [0], "repeats": 50}],
            "seed": 1,
        },
    },
}
