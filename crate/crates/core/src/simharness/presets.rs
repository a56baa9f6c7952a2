use serde::{Deserialize, Serialize};

use super::{SimScenario, Sweep, TestKind};
use crate::datagen::OutcomeCase;
use crate::effectsize::DispersionRule;
use crate::model::LinkFunction;

/// Correlation grid used when a figure shows a sweep without listing values.
pub const DEFAULT_RHO_GRID: [f64; 7] = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6];

const LOG_LAMBDA: [f64; 2] = [1.0, 0.15];
const IDENTITY_LAMBDA: [f64; 2] = [4.0, 0.4];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PresetFamily {
    pub name: String,
    pub description: String,
    pub scenarios: Vec<SimScenario>,
}

fn dispersion_for(case: &OutcomeCase) -> DispersionRule {
    // Poisson outcomes are fitted as a GLM with the dispersion fixed at one
    match case.kind {
        crate::datagen::OutcomeCaseKind::PoissonVarEqMean => DispersionRule::Fixed(1.0),
        _ => DispersionRule::Estimated,
    }
}

fn scenario(
    label: &str,
    case: OutcomeCase,
    link: LinkFunction,
    lambda: [f64; 2],
    beta: [f64; 2],
    sweep: Sweep,
    test: TestKind,
) -> SimScenario {
    SimScenario {
        label: label.into(),
        dispersion: dispersion_for(&case),
        outcome_case: case,
        link,
        lambda: lambda.to_vec(),
        beta: beta.to_vec(),
        sweep,
        test,
        replicates: 10_000,
        alpha: 0.05,
        target_power: 0.8,
        mc_size: crate::effectsize::DEFAULT_MC_SIZE,
        seed: None,
    }
}

fn rho_grid() -> Sweep {
    Sweep::Rho {
        values: DEFAULT_RHO_GRID.to_vec(),
    }
}

fn beta2_grid(lo: f64, hi: f64) -> Sweep {
    let k = 5;
    Sweep::Beta2 {
        rho: 0.3,
        values: (0..k).map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64).collect(),
    }
}

fn count_cases() -> [(&'static str, OutcomeCase); 3] {
    [
        ("poisson", OutcomeCase::poisson()),
        ("mixture", OutcomeCase::mixture_poisson()),
        ("modnb", OutcomeCase::modified_nb(2.0)),
    ]
}

fn gamma_cases() -> [(&'static str, OutcomeCase); 2] {
    [
        ("mean", OutcomeCase::gamma_mean(0.5)),
        ("meansq", OutcomeCase::gamma_mean_sq(0.16)),
    ]
}

fn single(name: String, description: &str, s: SimScenario) -> PresetFamily {
    PresetFamily {
        name,
        description: description.into(),
        scenarios: vec![s],
    }
}

/// The ten scenario families: eight Wald correlation sweeps (one per outcome
/// case and link), the score-test sweep over the three count cases, and the
/// β₂ sweeps at ρ = 0.3.
pub fn preset_families() -> Vec<PresetFamily> {
    let mut out = Vec::new();
    for (name, case) in count_cases() {
        let label = format!("wald-count-log-{name}");
        let s = scenario(
            &label,
            case,
            LinkFunction::Log,
            LOG_LAMBDA,
            [0.1, 0.25],
            rho_grid(),
            TestKind::Wald,
        );
        out.push(single(label, "Wald test, log-link counts, correlation sweep", s));
    }
    for (name, case) in count_cases() {
        let label = format!("wald-count-identity-{name}");
        let s = scenario(
            &label,
            case,
            LinkFunction::Identity,
            IDENTITY_LAMBDA,
            [0.4, 0.81],
            rho_grid(),
            TestKind::Wald,
        );
        out.push(single(label, "Wald test, identity-link counts, correlation sweep", s));
    }
    for (name, case) in gamma_cases() {
        let label = format!("wald-gamma-log-{name}");
        let s = scenario(
            &label,
            case,
            LinkFunction::Log,
            LOG_LAMBDA,
            [0.1, 0.15],
            rho_grid(),
            TestKind::Wald,
        );
        out.push(single(
            label,
            "Wald test, log-link gamma outcomes, correlation sweep",
            s,
        ));
    }
    out.push(PresetFamily {
        name: "score-count-log".into(),
        description: "Score test, log-link counts, correlation sweep".into(),
        scenarios: count_cases()
            .into_iter()
            .map(|(name, case)| {
                scenario(
                    &format!("score-count-log-{name}"),
                    case,
                    LinkFunction::Log,
                    LOG_LAMBDA,
                    [0.1, 0.21],
                    rho_grid(),
                    TestKind::Score,
                )
            })
            .collect(),
    });
    let mut sweeps = Vec::new();
    for (name, case) in count_cases() {
        sweeps.push(scenario(
            &format!("beta2-count-log-{name}"),
            case,
            LinkFunction::Log,
            LOG_LAMBDA,
            [0.1, 0.25],
            beta2_grid(0.15, 0.25),
            TestKind::Wald,
        ));
    }
    for (name, case) in count_cases() {
        sweeps.push(scenario(
            &format!("beta2-count-identity-{name}"),
            case,
            LinkFunction::Identity,
            IDENTITY_LAMBDA,
            [0.4, 0.81],
            beta2_grid(0.6, 1.2),
            TestKind::Wald,
        ));
    }
    for (name, case) in gamma_cases() {
        sweeps.push(scenario(
            &format!("beta2-gamma-log-{name}"),
            case,
            LinkFunction::Log,
            LOG_LAMBDA,
            [0.1, 0.15],
            beta2_grid(0.05, 0.2),
            TestKind::Wald,
        ));
    }
    out.push(PresetFamily {
        name: "beta2-sweep".into(),
        description: "Wald test, second predictor coefficient sweep at rho = 0.3".into(),
        scenarios: sweeps,
    });
    out
}

/// Every preset scenario, flattened.
pub fn scenario_presets() -> Vec<SimScenario> {
    preset_families().into_iter().flat_map(|f| f.scenarios).collect()
}

/// Scenarios matching a family name or a single scenario label.
pub fn find_preset(name: &str) -> Option<Vec<SimScenario>> {
    let families = preset_families();
    if let Some(f) = families.iter().find(|f| f.name == name) {
        return Some(f.scenarios.clone());
    }
    families
        .into_iter()
        .flat_map(|f| f.scenarios)
        .find(|s| s.label == name)
        .map(|s| vec![s])
}
