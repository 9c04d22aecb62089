# reference_market.py

# Manipulators churn between two edge sets following the cumulative pressure
# that also drives the price, so their base networks track the price.
MARKET_SCENARIOS = {
    "reference": {
        "description": "Price-coupled manipulation (kappa=0.8) with all six motifs planted every 30 days.",
        "market": {
            "days": 300,
            "n_normal": 150,
            "n_manipulator": 40,
            "normal_rate": 30.0,
            "kappa": 0.8,
            "volatility": 0.02,
            "p_abnormal": 0.5,
            "churn_edges": 160,
            "churn_activity": 0.5,
            "motif_every": 30,
            "seed": 1,
        },
    },
    "uncoupled": {
        "description": "Same manipulators, but the price ignores their intensity (kappa=0).",
        "market": {
            "days": 300,
            "n_normal": 150,
            "n_manipulator": 40,
            "kappa": 0.0,
            "p_abnormal": 0.5,
            "churn_edges": 160,
            "seed": 1,
        },
    },
}
