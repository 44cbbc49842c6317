//! Synthetic graduate-admissions cohorts.
//!
//! GRE Verbal, Quantitative and Analytical Writing scores are drawn from
//! gender-specific trivariate normals, rounded to the official increments and
//! truncated to the official ranges. Two label rules turn a cohort into
//! historical decisions: a fixed running-example rule with a small male bonus,
//! and an `R`-score whose gender weight grows with `ζ`.

use rand_distr::{Distribution, Normal, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::dataset::{fit_scaling, Dataset, Direction, Label, LegitimateFeature, Matrix, ProtectedFeature};
use crate::seed;
use crate::{Error, Result};

pub const GENDER: &str = "gender";
pub const MALE: &str = "male";
pub const FEMALE: &str = "female";
pub const FEATURES: [&str; 3] = ["GRE V", "GRE Q", "GRE AW"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CohortSpec {
    pub n: usize,
    /// Share of male applicants, allocated evenly along the index.
    pub male_share: f64,
    pub mu_male: [f64; 3],
    pub mu_female: [f64; 3],
    pub sigma_male: [[f64; 3]; 3],
    pub sigma_female: [[f64; 3]; 3],
    /// Inclusive range of GRE V and GRE Q (one-point increments).
    pub gre_range: (f64, f64),
    /// Inclusive range of GRE AW.
    pub aw_range: (f64, f64),
    pub aw_step: f64,
    pub seed: u64,
}

impl Default for CohortSpec {
    fn default() -> Self {
        CohortSpec {
            n: 1000,
            male_share: 0.5,
            mu_male: [150.7, 156.1, 3.5],
            mu_female: [150.3, 151.2, 3.7],
            sigma_male: [[81.0, 28.15, 5.43], [28.15, 84.64, 1.16], [5.43, 1.16, 0.81]],
            sigma_female: [[65.61, 24.51, 4.34], [24.51, 79.21, 1.00], [4.34, 1.00, 0.64]],
            gre_range: (130.0, 170.0),
            aw_range: (0.0, 6.0),
            aw_step: 0.5,
            seed: 0,
        }
    }
}

/// Lower-triangular `L` with `L Lᵀ = sigma`; rejects asymmetric or
/// non-positive-definite input.
pub fn cholesky<const D: usize>(sigma: &[[f64; D]; D]) -> Result<[[f64; D]; D]> {
    let mut l = [[0.0; D]; D];
    for i in 0..D {
        for j in 0..D {
            if (sigma[i][j] - sigma[j][i]).abs() > 1e-12 * sigma[i][j].abs().max(1.0) {
                return Err(Error::invalid("covariance matrix is not symmetric"));
            }
        }
    }
    for i in 0..D {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let d = sigma[i][i] - s;
                if !(d > 0.0) {
                    return Err(Error::invalid("covariance matrix is not positive definite"));
                }
                l[i][j] = d.sqrt();
            } else {
                l[i][j] = (sigma[i][j] - s) / l[j][j];
            }
        }
    }
    Ok(l)
}

fn round_truncate(x: f64, step: f64, lo: f64, hi: f64) -> f64 {
    ((x / step).round() * step).clamp(lo, hi)
}

/// `true` if observation `i` is male: the running male count is
/// `⌊(i+1)·share⌋`, so any prefix of the cohort keeps the share.
fn is_male(i: usize, share: f64) -> bool {
    ((i + 1) as f64 * share).floor() > (i as f64 * share).floor()
}

impl CohortSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invalid("cohort size must be positive"));
        }
        if !(0.0..=1.0).contains(&self.male_share) {
            return Err(Error::invalid("male share must lie in [0, 1]"));
        }
        if !(self.gre_range.0 < self.gre_range.1 && self.aw_range.0 < self.aw_range.1 && self.aw_step > 0.0) {
            return Err(Error::invalid("score ranges must be nonempty and the AW step positive"));
        }
        cholesky(&self.sigma_male)?;
        cholesky(&self.sigma_female)?;
        Ok(())
    }
}

/// Unlabelled cohort with protected `gender` and the three GRE scores.
/// Observation `i` draws from its own random stream.
pub fn sample_cohort(spec: &CohortSpec) -> Result<Dataset> {
    spec.validate()?;
    let chol_m = cholesky(&spec.sigma_male)?;
    let chol_f = cholesky(&spec.sigma_female)?;
    let mut data = Vec::with_capacity(spec.n * 3);
    let mut gender = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        let male = is_male(i, spec.male_share);
        let (mu, l) = if male { (&spec.mu_male, &chol_m) } else { (&spec.mu_female, &chol_f) };
        let mut rng = seed::rng(spec.seed, seed::COHORT, i as u64);
        let e: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
        for r in 0..3 {
            let x = mu[r] + (0..=r).map(|c| l[r][c] * e[c]).sum::<f64>();
            data.push(if r < 2 {
                round_truncate(x, 1.0, spec.gre_range.0, spec.gre_range.1)
            } else {
                round_truncate(x, spec.aw_step, spec.aw_range.0, spec.aw_range.1)
            });
        }
        gender.push(if male { MALE } else { FEMALE });
    }
    Dataset::new(
        None,
        vec![ProtectedFeature::with_levels(GENDER, &gender, vec![FEMALE.into(), MALE.into()])?],
        FEATURES.iter().map(|f| LegitimateFeature::new(*f, Direction::Up)).collect(),
        Matrix::new(spec.n, 3, data)?,
        None,
    )
}

/// Indicator of male applicants and the cohort-internally scaled GRE columns.
fn label_inputs(data: &Dataset) -> Result<(Vec<bool>, Vec<[f64; 3]>)> {
    let g = data
        .protected_by_name(GENDER)
        .ok_or_else(|| Error::schema(format!("cohort lacks the {GENDER:?} attribute")))?;
    let male = (0..data.len()).map(|i| g.value_label(i) == MALE).collect();
    if data.feature_names() != FEATURES {
        return Err(Error::schema(format!("cohort features must be {FEATURES:?}")));
    }
    let z = fit_scaling(data)?.apply(data.x())?;
    let rows = (0..data.len()).map(|i| [z.row(i)[0], z.row(i)[1], z.row(i)[2]]).collect();
    Ok((male, rows))
}

fn label_with<R>(data: &Dataset, seed: u64, score: R) -> Result<Dataset>
where
    R: Fn(bool, &[f64; 3], &mut rand_chacha::ChaCha8Rng) -> f64,
{
    let (male, z) = label_inputs(data)?;
    let labels = (0..data.len())
        .map(|i| {
            let mut rng = seed::rng(seed, seed::LABELS, i as u64);
            Label::from(score(male[i], &z[i], &mut rng) > 0.5)
        })
        .collect();
    data.clone().with_labels(labels)
}

/// `0.1·male + 0.2·V + 0.5·Q + 0.2·AW + ε > 0.5`, `ε ~ U(0, 0.1)`.
pub fn label_running_example(data: &Dataset, seed: u64) -> Result<Dataset> {
    let noise = Uniform::new(0.0, 0.1).expect("valid range");
    label_with(data, seed, |male, z, rng| {
        0.1 * f64::from(u8::from(male)) + 0.2 * z[0] + 0.5 * z[1] + 0.2 * z[2] + noise.sample(rng)
    })
}

/// `(ζ, 1, 2, 1) / (ζ + 4)` for (male, GRE V, GRE Q, GRE AW).
pub fn zeta_weights(zeta: f64) -> Result<[f64; 4]> {
    if !(zeta >= 0.0) || !zeta.is_finite() {
        return Err(Error::invalid(format!("ζ = {zeta} must be a finite nonnegative number")));
    }
    let s = zeta + 4.0;
    Ok([zeta / s, 1.0 / s, 2.0 / s, 1.0 / s])
}

/// `R > 0.5` with `ε ~ N(0, 0.1²)`.
pub fn label_zeta(data: &Dataset, zeta: f64, seed: u64) -> Result<Dataset> {
    label_zeta_with_noise(data, zeta, 0.1, seed)
}

/// `R > 0.5` with `ε ~ N(0, noise_sd²)`.
pub fn label_zeta_with_noise(data: &Dataset, zeta: f64, noise_sd: f64, seed: u64) -> Result<Dataset> {
    let w = zeta_weights(zeta)?;
    let noise = Normal::new(0.0, noise_sd).map_err(|e| Error::invalid(format!("noise: {e}")))?;
    label_with(data, seed, |male, z, rng| {
        w[0] * f64::from(u8::from(male)) + w[1] * z[0] + w[2] * z[1] + w[3] * z[2] + noise.sample(rng)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audit::group_stats;

    fn cohort(n: usize, seed: u64) -> Dataset {
        sample_cohort(&CohortSpec { n, seed, ..CohortSpec::default() }).unwrap()
    }

    #[test]
    fn scores_on_official_grids() {
        let d = cohort(2000, 1);
        for row in d.x().iter_rows() {
            for &v in &row[..2] {
                assert!((130.0..=170.0).contains(&v) && v.fract() == 0.0, "{v}");
            }
            assert!((0.0..=6.0).contains(&row[2]) && (row[2] * 2.0).fract() == 0.0, "{}", row[2]);
        }
    }

    #[test]
    fn male_quant_mean_matches_spec() {
        let d = cohort(100_000, 2);
        let g = d.protected_by_name(GENDER).unwrap();
        let q: Vec<f64> = (0..d.len()).filter(|&i| g.value_label(i) == MALE).map(|i| d.x().get(i, 1)).collect();
        assert_eq!(q.len(), 50_000);
        let mean = q.iter().sum::<f64>() / q.len() as f64;
        assert!((mean - 156.1).abs() < 0.5, "{mean}");
    }

    #[test]
    fn cholesky_reconstructs_and_rejects() {
        let s = CohortSpec::default().sigma_male;
        let l = cholesky(&s).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let v: f64 = (0..3).map(|k| l[i][k] * l[j][k]).sum();
                assert!((v - s[i][j]).abs() < 1e-9);
            }
        }
        assert!(cholesky(&[[1.0, 2.0], [2.0, 1.0]]).is_err());
        assert!(cholesky(&[[1.0, 0.5], [0.4, 1.0]]).is_err());
        let bad = CohortSpec { sigma_female: [[1.0, 2.0, 0.0], [2.0, 1.0, 0.0], [0.0, 0.0, 1.0]], ..CohortSpec::default() };
        assert!(sample_cohort(&bad).is_err());
    }

    #[test]
    fn prefixes_are_shared() {
        let small = cohort(100, 5);
        let large = cohort(300, 5);
        assert_eq!(small.x().as_slice(), &large.x().as_slice()[..300]);
        assert_eq!(small.protected()[0].value_label(99), large.protected()[0].value_label(99));
    }

    #[test]
    fn regeneration_is_deterministic() {
        let a = label_zeta(&cohort(300, 9), 1.5, 4).unwrap();
        let b = label_zeta(&cohort(300, 9), 1.5, 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn running_example_bounds() {
        // best possible male and worst possible female in the same cohort
        let x = Matrix::from_rows(&[vec![170.0, 170.0, 6.0], vec![130.0, 130.0, 0.0], vec![150.0, 150.0, 3.0]]).unwrap();
        let d = Dataset::new(
            None,
            vec![ProtectedFeature::with_levels(GENDER, &["male", "female", "male"], vec![FEMALE.into(), MALE.into()]).unwrap()],
            FEATURES.iter().map(|f| LegitimateFeature::new(*f, Direction::Up)).collect(),
            x,
            None,
        )
        .unwrap();
        for s in 0..20 {
            let l = label_running_example(&d, s).unwrap();
            assert_eq!(&l.labels().unwrap()[..2], &[Label::Pos, Label::Neg]);
        }
    }

    fn flip_gender(d: &Dataset) -> Dataset {
        let g = d.protected_by_name(GENDER).unwrap();
        let flipped: Vec<&str> = (0..d.len()).map(|i| if g.value_label(i) == MALE { FEMALE } else { MALE }).collect();
        Dataset::new(
            Some(d.ids().to_vec()),
            vec![ProtectedFeature::with_levels(GENDER, &flipped, vec![FEMALE.into(), MALE.into()]).unwrap()],
            d.features().to_vec(),
            d.x().clone(),
            None,
        )
        .unwrap()
    }

    #[test]
    fn demoting_a_male_never_helps() {
        let d = cohort(2000, 3);
        let g = d.protected_by_name(GENDER).unwrap();
        let before = label_running_example(&d, 8).unwrap();
        let after = label_running_example(&flip_gender(&d), 8).unwrap();
        let mut flips = 0;
        for i in 0..d.len() {
            let (b, a) = (before.labels().unwrap()[i], after.labels().unwrap()[i]);
            if g.value_label(i) == MALE {
                assert!(!(b == Label::Neg && a == Label::Pos));
                flips += usize::from(b != a);
            }
        }
        assert!(flips > 0);
    }

    #[test]
    fn zeta_weights_shape() {
        assert_eq!(zeta_weights(0.0).unwrap(), [0.0, 0.25, 0.5, 0.25]);
        for z in [0.0, 0.5, 1.7, 3.0, 100.0] {
            let w = zeta_weights(z).unwrap();
            assert_eq!(w[2] / w[1], 2.0);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        }
        assert!(zeta_weights(1e9).unwrap()[0] > 0.999);
        assert!(zeta_weights(-0.1).is_err());
        assert!(label_zeta(&cohort(10, 0), -1.0, 0).is_err());
    }

    #[test]
    fn admission_ratio_falls_with_zeta() {
        let zetas = [0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0];
        let seeds = 20;
        let mut means = Vec::new();
        for &zeta in &zetas {
            let mut total = 0.0;
            for s in 0..seeds {
                let d = label_zeta(&cohort(1000, 100 + s), zeta, 200 + s).unwrap();
                let share = d.positive_share().unwrap();
                assert!((0.50..=0.65).contains(&share), "ζ={zeta}: {share}");
                let g = group_stats(d.labels().unwrap(), d.protected_by_name(GENDER).unwrap(), FEMALE, MALE).unwrap();
                total += g.ratio;
            }
            means.push(total / seeds as f64);
        }
        assert!(means.windows(2).all(|w| w[1] <= w[0]), "{means:?}");
    }
}
