from __future__ import annotations

import pytest

from cdrisk.ingest import default_codebook_path, load_codebook
from cdrisk.model import ModelConfig
from cdrisk.synth import PlantSpec, generate
from cdrisk.trainer import TrainConfig, train


@pytest.fixture(scope="session")
def schema():
    return load_codebook(default_codebook_path())


@pytest.fixture(scope="session")
def valid_raw():
    """A raw survey row (CSV string cells) that cleans without rejection."""
    return {
        "general_health": "2",
        "physical_health": "88",      # none -> 0
        "mental_health": "3",
        "poor_health_days": "",       # skip pattern -> 0
        "personal_doctor": "1",
        "cannot_afford_care": "2",    # no -> 0
        "routine_checkup": "1",
        "any_exercise": "1",
        "exercise_type_1": "14",
        "exercise_freq_1": "1103",    # 3 per week -> 12.999 per month
        "exercise_duration_1": "45",
        "exercise_type_2": "88",      # no other activity -> 0
        "exercise_freq_2": "",
        "exercise_duration_2": "",
        "strength_training_freq": "1202",  # 2 per month
        "sex": "2",                   # female -> 0
        "marital_status": "1",
        "education_level": "5",
        "home_ownership": "1",
        "employment": "1",
        "weight_pounds": "180",
        "height_inches": "68",
        "deaf": "2",
        "blind": "2",
        "difficulty_deciding": "2",
        "difficulty_walking": "2",
        "difficulty_dressing": "2",
        "difficulty_errands": "2",
        "smoked_100_cigs": "2",
        "smoking_frequency": "",      # never smoked -> not at all (3)
        "smokeless_tobacco": "3",
        "ecigarette_use": "1",
        "alcohol_days": "1102",       # 2 days per week -> 8.666 per month
        "drinks_per_day": "2",
        "binge_days": "88",
        "had_covid": "2",
        "covid_long_symptoms": "",
        "covid_activity_impact": "",
        "BPHIGH6": "1",
        "TOLDHI3": "2",
        "CVDINFR4": "2",
        "CVDCRHD4": "2",
        "CVDSTRK3": "2",
        "ASTHMA3": "2",
        "CHCSCNC1": "2",
        "CHCOCNC1": "2",
        "CHCCOPD3": "2",
        "ADDEPEV3": "1",
        "CHCKDNY2": "2",
        "HAVARTH4": "2",
        "DIABETE4": "3",
    }


DEMO_PLANTS = [
    PlantSpec(
        "DIABETE4",
        (("weight_pounds", 2.0), ("alcohol_days", 1.2), ("mental_health", -1.5)),
        noise_sd=0.5,
        base_rate=0.35,
    )
]


@pytest.fixture(scope="session")
def demo_records(schema):
    return generate(schema, 2000, DEMO_PLANTS, seed=7)


@pytest.fixture(scope="session")
def trained_small(schema, demo_records):
    """A quick DIABETE4 model shared by checkpoint/explainer/service tests."""
    model, report = train(
        demo_records,
        schema,
        "DIABETE4",
        ModelConfig(hidden_dim=32, n_blocks=2, seed=5),
        TrainConfig(seed=5, epochs=8),
    )
    return model, report
