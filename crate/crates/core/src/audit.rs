//! Meritocratic unfairness and group statistics.
//!
//! Observation `i` is *more qualified* than `j` when it is at least as good on
//! every scaled legitimate feature and strictly better on one that carries
//! weight (`ψ > 0`). `T` counts ordered (victim, beneficiary) pairs where the
//! more qualified victim is ranked below, or labelled `-` while the
//! beneficiary gets `+`; `S` is the share of observations that are a victim at
//! least once.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::correlation::csv_field;
use crate::dataset::{Label, ProtectedFeature, ScaledMatrix};
use crate::exec::Exec;
use crate::northstar::RankedCohort;
use crate::{Error, Result};

/// Dominance with weight-aware strictness.
pub fn more_qualified(zi: &[f64], zj: &[f64], psi: &[f64]) -> Result<bool> {
    if zi.len() != zj.len() || zi.len() != psi.len() {
        return Err(Error::schema("rows and weights must have the same length"));
    }
    Ok(dominates(zi, zj, psi))
}

#[inline]
fn dominates(zi: &[f64], zj: &[f64], psi: &[f64]) -> bool {
    let mut strict = false;
    for l in 0..zi.len() {
        if zi[l] < zj[l] {
            return false;
        }
        if zi[l] > zj[l] && psi[l] > 0.0 {
            strict = true;
        }
    }
    strict
}

/// `Σ ψ_l |z_il - z_jl|`.
pub fn similarity(zi: &[f64], zj: &[f64], psi: &[f64]) -> Result<f64> {
    if zi.len() != zj.len() || zi.len() != psi.len() {
        return Err(Error::schema("rows and weights must have the same length"));
    }
    Ok(zi.iter().zip(zj).zip(psi).map(|((a, b), w)| w * (a - b).abs()).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Unfairness {
    /// Observations treated unfairly at least once.
    pub victims: usize,
    /// Unfair ordered pairs.
    pub pairs: u64,
    pub n: usize,
}

impl Unfairness {
    /// Share `S` of observations treated unfairly.
    pub fn share(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.victims as f64 / self.n as f64
        }
    }

    pub fn total(&self) -> u64 {
        self.pairs
    }
}

/// Shared pairwise scan: `i` is a victim of `j` when `i` dominates `j` and
/// `worse(i, j)` holds.
fn scan<W>(z: &ScaledMatrix, psi: &[f64], exec: Exec, worse: W) -> Result<Unfairness>
where
    W: Fn(usize, usize) -> bool + Sync + Send,
{
    if z.cols() != psi.len() {
        return Err(Error::schema("scaled rows do not match the weight vector"));
    }
    let n = z.rows();
    let per_row = exec.map(n, |i| {
        let zi = z.row(i);
        (0..n).filter(|&j| j != i && worse(i, j) && dominates(zi, z.row(j), psi)).count() as u64
    });
    Ok(Unfairness {
        victims: per_row.iter().filter(|&&c| c > 0).count(),
        pairs: per_row.iter().sum(),
        n,
    })
}

/// Ranking-based audit: victims are ranked behind someone they dominate.
/// `positions[i]` is the rank of row `i` (1 = best).
pub fn unfairness_of_positions(z: &ScaledMatrix, positions: &[usize], psi: &[f64]) -> Result<Unfairness> {
    unfairness_of_positions_with(z, positions, psi, Exec::default())
}

pub fn unfairness_of_positions_with(z: &ScaledMatrix, positions: &[usize], psi: &[f64], exec: Exec) -> Result<Unfairness> {
    if positions.len() != z.rows() {
        return Err(Error::schema("one rank position per row required"));
    }
    scan(z, psi, exec, |i, j| positions[i] > positions[j])
}

pub fn unfairness_of_ranking(cohort: &RankedCohort, psi: &[f64]) -> Result<Unfairness> {
    unfairness_of_positions(&cohort.scaled(), &cohort.positions(), psi)
}

/// Label-based audit: victims are `-` while someone they dominate is `+`.
pub fn unfairness_of_labels(outcomes: &[Label], z: &ScaledMatrix, psi: &[f64]) -> Result<Unfairness> {
    unfairness_of_labels_with(outcomes, z, psi, Exec::default())
}

pub fn unfairness_of_labels_with(outcomes: &[Label], z: &ScaledMatrix, psi: &[f64], exec: Exec) -> Result<Unfairness> {
    if outcomes.len() != z.rows() {
        return Err(Error::schema("one outcome per row required"));
    }
    scan(z, psi, exec, |i, j| !outcomes[i].is_pos() && outcomes[j].is_pos())
}

/// Share of matching outcomes.
pub fn accuracy(outcomes: &[Label], reference: &[Label]) -> Result<f64> {
    if outcomes.len() != reference.len() {
        return Err(Error::schema("outcome and reference lengths differ"));
    }
    if outcomes.is_empty() {
        return Err(Error::invalid("accuracy of an empty sample"));
    }
    let hits = outcomes.iter().zip(reference).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / outcomes.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRate {
    pub group: String,
    pub size: usize,
    pub admitted: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub attribute: String,
    /// Every group present, in sorted order.
    pub groups: Vec<GroupRate>,
    pub disadvantaged: String,
    pub reference: String,
    /// Rate of the disadvantaged group over the reference rate.
    pub ratio: f64,
    /// The reference group admitted nobody (or is empty); `ratio` is then 0.
    pub ratio_undefined: bool,
}

impl GroupStats {
    pub fn rate(&self, group: &str) -> Option<f64> {
        self.groups.iter().find(|g| g.group == group).map(|g| g.rate)
    }
}

/// Admission rates per value of `attribute` and the disadvantaged/reference ratio.
pub fn group_stats(outcomes: &[Label], attribute: &ProtectedFeature, disadvantaged: &str, reference: &str) -> Result<GroupStats> {
    if outcomes.len() != attribute.len() {
        return Err(Error::schema("outcomes and protected values differ in length"));
    }
    let mut counts: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for (i, o) in outcomes.iter().enumerate() {
        let c = counts.entry(attribute.value_label(i)).or_default();
        c.0 += 1;
        c.1 += usize::from(o.is_pos());
    }
    for g in [disadvantaged, reference] {
        if !counts.contains_key(g) {
            return Err(Error::invalid(format!("group {g:?} does not occur in {}", attribute.name)));
        }
    }
    let groups: Vec<GroupRate> = counts
        .into_iter()
        .map(|(group, (size, admitted))| GroupRate {
            rate: admitted as f64 / size as f64,
            group,
            size,
            admitted,
        })
        .collect();
    let rate = |g: &str| groups.iter().find(|r| r.group == g).map_or(0.0, |r| r.rate);
    let (num, den) = (rate(disadvantaged), rate(reference));
    let (ratio, ratio_undefined) = if den > 0.0 { (num / den, false) } else { (0.0, true) };
    Ok(GroupStats {
        attribute: attribute.name.clone(),
        groups,
        disadvantaged: disadvantaged.to_string(),
        reference: reference.to_string(),
        ratio,
        ratio_undefined,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AuditBasis {
    RankingBased,
    LabelBased,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub basis: AuditBasis,
    pub alpha: Option<f64>,
    pub n: usize,
    pub share_unfair: f64,
    pub unfair_pairs: u64,
    pub accuracy: Option<f64>,
    pub groups: Option<GroupStats>,
}

impl AuditReport {
    pub fn new(basis: AuditBasis, alpha: Option<f64>, u: Unfairness) -> Self {
        AuditReport {
            basis,
            alpha,
            n: u.n,
            share_unfair: u.share(),
            unfair_pairs: u.pairs,
            accuracy: None,
            groups: None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub const CSV_HEADER: &'static str = "basis,alpha,n,S,T,accuracy,group_ratio";

    pub fn to_csv_row(&self) -> String {
        let basis = match self.basis {
            AuditBasis::RankingBased => "ranking-based",
            AuditBasis::LabelBased => "label-based",
        };
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        format!(
            "{},{},{},{},{},{},{}",
            csv_field(basis),
            opt(self.alpha),
            self.n,
            self.share_unfair,
            self.unfair_pairs,
            opt(self.accuracy),
            opt(self.groups.as_ref().map(|g| g.ratio))
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Matrix;
    use proptest::prelude::*;

    fn scaled(rows: &[Vec<f64>]) -> ScaledMatrix {
        ScaledMatrix::new(Matrix::from_rows(rows).unwrap()).unwrap()
    }

    /// Pair-by-pair recount kept deliberately naive.
    fn brute_force(z: &[Vec<f64>], psi: &[f64], unfair: impl Fn(usize, usize) -> bool) -> (usize, u64) {
        let n = z.len();
        let mut victim = vec![false; n];
        let mut t = 0;
        for i in 0..n {
            for j in 0..n {
                let ge = (0..psi.len()).all(|l| z[i][l] >= z[j][l]);
                let gt = (0..psi.len()).any(|l| z[i][l] > z[j][l] && psi[l] != 0.0);
                if i != j && ge && gt && unfair(i, j) {
                    victim[i] = true;
                    t += 1;
                }
            }
        }
        (victim.into_iter().filter(|v| *v).count(), t)
    }

    #[test]
    fn admissions_excerpt_dominance() {
        // scaled on GRE ranges: obs 11 (153,147,3.5) vs obs 1 (147,144,3.0)
        let s = |v: f64, q: f64, aw: f64| [(v - 130.0) / 40.0, (q - 130.0) / 40.0, aw / 6.0];
        let psi = [0.1, 0.7, 0.2];
        assert!(more_qualified(&s(153.0, 147.0, 3.5), &s(147.0, 144.0, 3.0), &psi).unwrap());
        assert!(more_qualified(&s(153.0, 147.0, 3.5), &s(146.0, 140.0, 3.5), &psi).unwrap());
        assert!(!more_qualified(&s(147.0, 144.0, 3.0), &s(146.0, 140.0, 3.5), &psi).unwrap());
    }

    #[test]
    fn dominance_edge_cases() {
        let psi = [0.5, 0.0];
        assert!(!more_qualified(&[0.3, 0.3], &[0.3, 0.3], &psi).unwrap());
        assert!(!more_qualified(&[0.3, 0.9], &[0.3, 0.3], &psi).unwrap());
        assert!(more_qualified(&[0.4, 0.9], &[0.3, 0.3], &psi).unwrap());
        assert!(more_qualified(&[0.4], &[0.3, 0.3], &psi).is_err());
    }

    #[test]
    fn hand_built_inversion() {
        let z = scaled(&[vec![0.9, 0.9], vec![0.1, 0.1]]);
        let u = unfairness_of_positions(&z, &[2, 1], &[0.5, 0.5]).unwrap();
        assert_eq!((u.share(), u.total()), (0.5, 1));
        let u = unfairness_of_positions(&z, &[1, 2], &[0.5, 0.5]).unwrap();
        assert_eq!((u.share(), u.total()), (0.0, 0));
    }

    #[test]
    fn uniform_labels_are_never_unfair() {
        let z = scaled(&[vec![0.9], vec![0.1], vec![0.5]]);
        for l in [Label::Pos, Label::Neg] {
            let u = unfairness_of_labels(&[l; 3], &z, &[1.0]).unwrap();
            assert_eq!(u.total(), 0);
        }
    }

    #[test]
    fn similarity_examples() {
        let psi = [0.2, 0.3, 0.5];
        assert_eq!(similarity(&[0.4; 3], &[0.4; 3], &psi).unwrap(), 0.0);
        assert_eq!(similarity(&[1.0; 3], &[0.0; 3], &psi).unwrap(), psi.iter().sum::<f64>());
    }

    #[test]
    fn accuracy_examples() {
        let a = [Label::Pos, Label::Neg, Label::Pos];
        let b: Vec<Label> = a.iter().map(|l| Label::from(!l.is_pos())).collect();
        assert_eq!(accuracy(&a, &a).unwrap(), 1.0);
        assert_eq!(accuracy(&a, &b).unwrap(), 0.0);
        assert!(accuracy(&a, &b[..2]).is_err());
    }

    fn gender(values: &[&str]) -> ProtectedFeature {
        ProtectedFeature::categorical("gender", values)
    }

    #[test]
    fn group_rates_and_ratio() {
        let g = gender(&["f", "m", "f", "m"]);
        let all = group_stats(&[Label::Pos; 4], &g, "f", "m").unwrap();
        assert_eq!(all.rate("f"), Some(1.0));
        assert_eq!(all.ratio, 1.0);

        let s = group_stats(&[Label::Pos, Label::Pos, Label::Neg, Label::Pos], &g, "f", "m").unwrap();
        assert_eq!(s.ratio, 0.5);

        let none_ref = group_stats(&[Label::Pos, Label::Neg, Label::Neg, Label::Neg], &g, "f", "m").unwrap();
        assert!(none_ref.ratio_undefined);
        assert_eq!(none_ref.ratio, 0.0);

        assert!(group_stats(&[Label::Pos; 4], &g, "x", "m").is_err());
    }

    #[test]
    fn report_serializes() {
        let u = Unfairness { victims: 3, pairs: 7, n: 10 };
        let r = AuditReport::new(AuditBasis::LabelBased, Some(0.5), u);
        assert!(r.to_json().contains("\"share_unfair\": 0.3"));
        assert_eq!(r.to_csv_row(), "label-based,0.5,10,0.3,7,,");
    }

    fn grid_rows(n: usize, l: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
        prop::collection::vec(prop::collection::vec((0u8..=4).prop_map(|v| f64::from(v) / 4.0), l), n)
    }

    proptest! {
        #[test]
        fn scans_match_brute_force(
            (rows, psi, perm, labels) in (1usize..=12, 1usize..=4).prop_flat_map(|(n, l)| (
                grid_rows(n, l),
                prop::collection::vec((0u8..=2).prop_map(|v| f64::from(v) / 2.0), l),
                Just((1..=n).collect::<Vec<usize>>()).prop_shuffle(),
                prop::collection::vec(any::<bool>(), n),
            ))
        ) {
            let z = scaled(&rows);
            let labels: Vec<Label> = labels.into_iter().map(Label::from).collect();
            for exec in [Exec::Sequential, Exec::Parallel] {
                let u = unfairness_of_positions_with(&z, &perm, &psi, exec).unwrap();
                prop_assert_eq!((u.victims, u.pairs), brute_force(&rows, &psi, |i, j| perm[i] > perm[j]));
                let u = unfairness_of_labels_with(&labels, &z, &psi, exec).unwrap();
                prop_assert_eq!(
                    (u.victims, u.pairs),
                    brute_force(&rows, &psi, |i, j| labels[i] == Label::Neg && labels[j] == Label::Pos)
                );
                prop_assert_eq!(u.victims == 0, u.pairs == 0);
            }
        }

        #[test]
        fn dominance_is_a_strict_partial_order(
            rows in grid_rows(3, 3),
            psi in prop::collection::vec((0u8..=2).prop_map(|v| f64::from(v) / 2.0), 3),
        ) {
            let (a, b, c) = (&rows[0], &rows[1], &rows[2]);
            prop_assert!(!dominates(a, a, &psi));
            prop_assert!(!(dominates(a, b, &psi) && dominates(b, a, &psi)));
            if dominates(a, b, &psi) && dominates(b, c, &psi) {
                prop_assert!(dominates(a, c, &psi));
            }
        }

        #[test]
        fn similarity_is_a_pseudometric(
            rows in prop::collection::vec(prop::collection::vec(0.0f64..=1.0, 4), 3),
            psi in prop::collection::vec(0.0f64..=1.0, 4),
        ) {
            let d = |x: &[f64], y: &[f64]| similarity(x, y, &psi).unwrap();
            let (a, b, c) = (&rows[0], &rows[1], &rows[2]);
            prop_assert_eq!(d(a, b), d(b, a));
            prop_assert!(d(a, c) <= d(a, b) + d(b, c) + 1e-12);
            prop_assert_eq!(d(a, a), 0.0);
        }
    }
}
