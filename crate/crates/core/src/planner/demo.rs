//! Synthetic stand-in for a survey pilot: a five-level ordinal predictor
//! (first level as reference) with four categorical adjustors, a log-link
//! gamma outcome with variance proportional to the mean.

use std::fmt::Write as _;

use super::ingest::{ColumnSpec, PilotMapping};
use crate::datagen::{gen_outcome, OutcomeCase};
use crate::distributions::{
    derive_stream, normal_cdf, normal_quantile, sample_bernoulli, sample_standard_normal, RngStream,
};
use crate::error::Result;
use crate::model::{linear_predictor, LinkFunction, ModelSpec, OutcomeKind, VarianceFunction};

const DEMO_DOMAIN: u64 = 0x7069_6c6f_7464_656d;

const PPE: [&str; 5] = [
    "very_confident",
    "somewhat_confident",
    "uncertain",
    "somewhat_doubtful",
    "very_doubtful",
];
const PPE_PROBS: [f64; 5] = [0.55, 0.25, 0.10, 0.06, 0.04];
const AGE: [&str; 4] = ["18-29", "30-39", "40-49", "50+"];
const GENDER: [&str; 2] = ["male", "female"];
const EDUCATION: [&str; 3] = ["associate", "bachelor", "graduate"];
const ROLE: [&str; 3] = ["nurse", "physician", "other"];

/// Latent correlation between the predictor and the role adjustor.
const LATENT_RHO: f64 = 0.6;
const SIGMA2: f64 = 0.217;
const LAMBDA: [f64; 9] = [0.47, 0.05, 0.10, 0.12, 0.08, -0.05, -0.10, 0.15, 0.25];
const BETA: [f64; 4] = [0.064, 0.100, 0.185, 0.142];

/// Generating model; Z = (1, age×3, female, education×2, role×2).
pub fn case_study_model() -> ModelSpec {
    ModelSpec::new(
        LinkFunction::Log,
        VarianceFunction::Mean,
        SIGMA2,
        LAMBDA.to_vec(),
        BETA.to_vec(),
    )
    .expect("constant model is valid")
}

pub fn case_study_mapping() -> PilotMapping {
    PilotMapping {
        outcome: "burnout".into(),
        outcome_kind: OutcomeKind::Positive,
        link: LinkFunction::Log,
        variance: VarianceFunction::Mean,
        predictors: vec![ColumnSpec::categorical("ppe", &PPE, PPE[0])],
        adjustors: vec![
            ColumnSpec::categorical("age", &AGE, AGE[0]),
            ColumnSpec::categorical("gender", &GENDER, GENDER[0]),
            ColumnSpec::categorical("education", &EDUCATION, EDUCATION[0]),
            ColumnSpec::categorical("role", &ROLE, ROLE[0]),
        ],
        missing: vec![String::new(), "NA".into()],
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CaseStudy {
    pub csv: String,
    pub mapping: PilotMapping,
    pub seed: u64,
}

/// Index of the interval of `u` among increasing cumulative cut points.
fn cut(u: f64, cuts: &[f64]) -> usize {
    cuts.iter().filter(|&&c| u >= c).count()
}

fn dummies(level: usize, width: usize) -> impl Iterator<Item = f64> {
    (1..=width).map(move |k| if level == k { 1.0 } else { 0.0 })
}

/// `n` rows drawn sequentially from one stream of `seed`.
pub fn synthetic_case_study(n: usize, seed: u64) -> Result<CaseStudy> {
    let spec = case_study_model();
    let case = OutcomeCase::gamma_mean(SIGMA2);
    let mut rng = RngStream::new(seed, derive_stream(&[DEMO_DOMAIN]));
    let ppe_cuts: Vec<f64> = PPE_PROBS
        .iter()
        .scan(0.0, |acc, p| {
            *acc += p;
            Some(*acc)
        })
        .take(PPE.len() - 1)
        .collect();
    let age_cuts = [0.3, 0.6, 0.85].map(normal_quantile);
    let edu_cuts = [0.35, 0.75].map(normal_quantile);
    let role_cuts = [0.4, 0.75].map(normal_quantile);
    let rho = LATENT_RHO;

    let mut csv = String::from("burnout,ppe,age,gender,education,role\n");
    for _ in 0..n {
        let l = sample_standard_normal(&mut rng);
        let a = rho * l + (1.0 - rho * rho).sqrt() * sample_standard_normal(&mut rng);
        let b = 0.5 * rho * l + (1.0 - 0.25 * rho * rho).sqrt() * sample_standard_normal(&mut rng);
        let female = sample_bernoulli(0.75, &mut rng)? as usize;
        let e = 0.8 * sample_standard_normal(&mut rng) + 0.3 * a;

        let ppe = cut(normal_cdf(l), &ppe_cuts);
        let age = cut(b, &age_cuts);
        let edu = cut(e, &edu_cuts);
        let role = cut(a, &role_cuts);

        let z: Vec<f64> = std::iter::once(1.0)
            .chain(dummies(age, 3))
            .chain(std::iter::once(female as f64))
            .chain(dummies(edu, 2))
            .chain(dummies(role, 2))
            .collect();
        let x: Vec<f64> = dummies(ppe, 4).collect();
        let mu = spec.link.inverse(linear_predictor(&spec, &z, &x)?);
        let y = gen_outcome(&case, mu, &mut rng)?;
        writeln!(
            csv,
            "{y},{},{},{},{},{}",
            PPE[ppe], AGE[age], GENDER[female], EDUCATION[edu], ROLE[role]
        )
        .expect("writing to a String cannot fail");
    }
    Ok(CaseStudy {
        csv,
        mapping: case_study_mapping(),
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::read_pilot;

    #[test]
    fn reproducible_and_parseable() {
        let a = synthetic_case_study(300, 9).unwrap();
        let b = synthetic_case_study(300, 9).unwrap();
        assert_eq!(a, b);
        let d = read_pilot(a.csv.as_bytes(), &a.mapping).unwrap();
        assert_eq!(d.dataset.n(), 300);
        assert_eq!(d.dataset.r(), LAMBDA.len());
        assert_eq!(d.dataset.p(), BETA.len());
        assert_eq!(d.rows_dropped, 0);
    }

    #[test]
    fn predictor_frequencies() {
        let cs = synthetic_case_study(20_000, 1).unwrap();
        let d = read_pilot(cs.csv.as_bytes(), &cs.mapping).unwrap().dataset;
        let n = d.n() as f64;
        for (k, p) in PPE_PROBS.iter().enumerate().skip(1) {
            let freq = d.x.column(k - 1).sum() / n;
            assert!((freq - p).abs() < 0.01, "level {k}: {freq}");
        }
    }

    #[test]
    fn cut_points() {
        assert_eq!(cut(0.1, &[0.2, 0.5]), 0);
        assert_eq!(cut(0.2, &[0.2, 0.5]), 1);
        assert_eq!(cut(0.9, &[0.2, 0.5]), 2);
    }
}
