//! The worked female/male drug example: identical trials, different
//! observational behavior.

use crate::study::{ArmCounts, ExperimentalSummary, ObservationalSummary, StudyProbabilities};

pub fn female_counts() -> (ExperimentalSummary, ObservationalSummary) {
    (
        ExperimentalSummary {
            treated: ArmCounts::new(489, 511),
            control: ArmCounts::new(210, 790),
        },
        ObservationalSummary {
            chose_treatment: ArmCounts::new(378, 1022),
            chose_control: ArmCounts::new(420, 180),
        },
    )
}

pub fn male_counts() -> (ExperimentalSummary, ObservationalSummary) {
    (
        ExperimentalSummary {
            treated: ArmCounts::new(490, 510),
            control: ArmCounts::new(210, 790),
        },
        ObservationalSummary {
            chose_treatment: ArmCounts::new(980, 420),
            chose_control: ArmCounts::new(420, 180),
        },
    )
}

pub fn female_probabilities() -> StudyProbabilities {
    let (e, o) = female_counts();
    StudyProbabilities::from_counts(&e, &o).expect("female table is well formed")
}

pub fn male_probabilities() -> StudyProbabilities {
    let (e, o) = male_counts();
    StudyProbabilities::from_counts(&e, &o).expect("male table is well formed")
}

/// The bundled study file holding both tables.
pub const PAPER_TABLES_JSON: &str = include_str!("../data/paper_tables.json");
