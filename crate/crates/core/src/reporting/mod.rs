//! Profiles, dominance, ranking reports and their file formats.

mod cross_task;

use std::cmp::Ordering;
use std::io::Write;

use serde::Serialize;

pub use cross_task::{cross_task_ranks, CombinationPolicy, CrossTaskRankTable, TaskScores};

use crate::eval::{weighted_sum, ScoreMatrix};
use crate::family::ImportanceDistribution;
use crate::{Error, MetricDirection, Result};

/// How points are laid out along a profile's x-axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderRule {
    /// Heaviest point first; equal weights keep index order.
    #[default]
    DescendingWeight,
    Index,
}

pub fn profile_ordering(weights: &[f64], rule: OrderRule) -> Vec<usize> {
    let mut order: Vec<usize> = (0..weights.len()).collect();
    if rule == OrderRule::DescendingWeight {
        order.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
    }
    order
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfilePoint {
    pub index: usize,
    pub weight: f64,
    pub score: f64,
    pub contribution: f64,
    pub cumulative: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerformanceProfile {
    pub method: String,
    pub ordering: Vec<usize>,
    pub points: Vec<ProfilePoint>,
    pub final_value: f64,
}

impl PerformanceProfile {
    pub fn cumulative(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.cumulative).collect()
    }
}

/// Accumulates contributions `s_i w_i` along the chosen ordering.
pub fn build_profile(method: &str, scores: &[f64], weights: &[f64], rule: OrderRule) -> Result<PerformanceProfile> {
    if scores.len() != weights.len() {
        return Err(Error::SizeMismatch(format!(
            "{} scores for {} weights",
            scores.len(),
            weights.len()
        )));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::IncompleteScores {
            method: method.to_string(),
            missing: vec![i],
        });
    }
    let ordering = profile_ordering(weights, rule);
    let mut cumulative = 0.0;
    let points: Vec<ProfilePoint> = ordering
        .iter()
        .map(|&i| {
            let contribution = scores[i] * weights[i];
            cumulative += contribution;
            ProfilePoint {
                index: i,
                weight: weights[i],
                score: scores[i],
                contribution,
                cumulative,
            }
        })
        .collect();
    Ok(PerformanceProfile {
        method: method.to_string(),
        ordering,
        points,
        final_value: cumulative,
    })
}

/// Profiles for every method of a complete matrix under one distribution.
pub fn build_profiles(
    matrix: &ScoreMatrix,
    dist: &ImportanceDistribution,
    rule: OrderRule,
) -> Result<Vec<PerformanceProfile>> {
    matrix
        .rows
        .iter()
        .map(|r| build_profile(&r.method, &r.scores()?, dist.mass(), rule))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DominanceOutcome {
    ADominates,
    BDominates,
    Incomparable,
    Equal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Dominance {
    /// Strict reading: the better curve must be strictly better at every point.
    pub outcome: DominanceOutcome,
    /// A is at least as good everywhere and strictly better somewhere.
    pub a_weakly_dominates: bool,
    pub b_weakly_dominates: bool,
}

/// Compares cumulative curves point by point. Under a cost metric the lower
/// curve is better; under a reward metric the higher one.
pub fn dominance(a: &PerformanceProfile, b: &PerformanceProfile, direction: MetricDirection) -> Result<Dominance> {
    let same_layout = a.ordering == b.ordering
        && a.points
            .iter()
            .zip(&b.points)
            .all(|(x, y)| x.weight.to_bits() == y.weight.to_bits());
    if !same_layout {
        return Err(Error::MismatchedProfiles(format!(
            "`{}` and `{}` use different orderings or weights",
            a.method, b.method
        )));
    }
    let (mut a_strict, mut b_strict, mut a_weak, mut b_weak, mut any_diff) = (true, true, true, true, false);
    for (x, y) in a.points.iter().zip(&b.points) {
        let (ua, ub) = (direction.utility(x.cumulative), direction.utility(y.cumulative));
        match ua.partial_cmp(&ub) {
            Some(Ordering::Greater) => {
                b_strict = false;
                b_weak = false;
                any_diff = true;
            }
            Some(Ordering::Less) => {
                a_strict = false;
                a_weak = false;
                any_diff = true;
            }
            _ => {
                a_strict = false;
                b_strict = false;
            }
        }
    }
    let outcome = if !any_diff {
        DominanceOutcome::Equal
    } else if a_strict {
        DominanceOutcome::ADominates
    } else if b_strict {
        DominanceOutcome::BDominates
    } else {
        DominanceOutcome::Incomparable
    };
    Ok(Dominance {
        outcome,
        a_weakly_dominates: any_diff && a_weak,
        b_weakly_dominates: any_diff && b_weak,
    })
}

/// Best first; equal values fall back to method id order.
pub fn rank_methods(methods: &[String], values: &[f64], direction: MetricDirection) -> Vec<usize> {
    let mut order: Vec<usize> = (0..methods.len()).collect();
    order.sort_by(|&a, &b| {
        direction
            .utility(values[b])
            .total_cmp(&direction.utility(values[a]))
            .then_with(|| methods[a].cmp(&methods[b]))
    });
    order
}

fn has_ties(values: &[f64]) -> bool {
    values.iter().enumerate().any(|(i, v)| values[i + 1..].contains(v))
}

/// A point where two methods appear in the opposite order to the family ranking.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FlipPair {
    pub point: usize,
    /// Ranked higher on the family.
    pub family_winner: String,
    /// Ranked higher on this point.
    pub point_winner: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankReport {
    pub methods: Vec<String>,
    pub direction: MetricDirection,
    pub family_values: Vec<f64>,
    pub family_ranking: Vec<String>,
    pub per_point_rankings: Vec<Vec<String>>,
    pub conflict_points: Vec<usize>,
    pub conflict_count: usize,
    pub flip_pairs: Vec<FlipPair>,
    /// Set when some ranking needed the method-id tie-break.
    pub family_tie_broken: bool,
    pub points_tie_broken: Vec<usize>,
}

/// Compares the family ranking (by `family_values`) with the ranking each
/// point induces. `scores[m][i]` is method `m`'s score on point `i`.
pub fn rank_report(
    methods: &[String],
    family_values: &[f64],
    scores: &[Vec<f64>],
    direction: MetricDirection,
) -> Result<RankReport> {
    if methods.len() != family_values.len() || methods.len() != scores.len() {
        return Err(Error::SizeMismatch(
            "one value and one score row per method required".into(),
        ));
    }
    let m = scores.first().map_or(0, Vec::len);
    for (k, row) in scores.iter().enumerate() {
        if row.len() != m {
            return Err(Error::SizeMismatch(format!(
                "score row of `{}` has {} points, expected {m}",
                methods[k],
                row.len()
            )));
        }
        let missing: Vec<usize> = (0..m).filter(|&i| !row[i].is_finite()).collect();
        if !missing.is_empty() {
            return Err(Error::IncompleteScores {
                method: methods[k].clone(),
                missing,
            });
        }
    }
    let family = rank_methods(methods, family_values, direction);
    let mut position = vec![0; methods.len()];
    for (p, &k) in family.iter().enumerate() {
        position[k] = p;
    }
    let mut per_point = Vec::with_capacity(m);
    let mut conflict_points = Vec::new();
    let mut flip_pairs = Vec::new();
    let mut points_tie_broken = Vec::new();
    for i in 0..m {
        let values: Vec<f64> = scores.iter().map(|r| r[i]).collect();
        if has_ties(&values) {
            points_tie_broken.push(i);
        }
        let order = rank_methods(methods, &values, direction);
        if order != family {
            conflict_points.push(i);
        }
        for (p, &a) in order.iter().enumerate() {
            for &b in &order[p + 1..] {
                if position[b] < position[a] {
                    flip_pairs.push(FlipPair {
                        point: i,
                        family_winner: methods[b].clone(),
                        point_winner: methods[a].clone(),
                    });
                }
            }
        }
        per_point.push(order.iter().map(|&k| methods[k].clone()).collect());
    }
    flip_pairs.sort_by(|x, y| {
        x.point
            .cmp(&y.point)
            .then_with(|| x.family_winner.cmp(&y.family_winner))
            .then_with(|| x.point_winner.cmp(&y.point_winner))
    });
    Ok(RankReport {
        methods: methods.to_vec(),
        direction,
        family_values: family_values.to_vec(),
        family_ranking: family.iter().map(|&k| methods[k].clone()).collect(),
        per_point_rankings: per_point,
        conflict_count: conflict_points.len(),
        conflict_points,
        flip_pairs,
        family_tie_broken: has_ties(family_values),
        points_tie_broken,
    })
}

/// [`rank_report`] with family values computed exactly from `dist`.
pub fn rank_report_for(matrix: &ScoreMatrix, dist: &ImportanceDistribution) -> Result<RankReport> {
    let methods: Vec<String> = matrix.methods().into_iter().map(String::from).collect();
    let table = matrix.score_table()?;
    let values = table
        .iter()
        .map(|s| weighted_sum(s, dist.mass()).map(|x| x.0))
        .collect::<Result<Vec<_>>>()?;
    rank_report(&methods, &values, &table, matrix.direction)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityTable {
    pub methods: Vec<String>,
    pub distributions: Vec<String>,
    /// `values[d][m]`: family performance of method `m` under distribution `d`.
    pub values: Vec<Vec<f64>>,
    pub rankings: Vec<Vec<String>>,
}

/// Family performance and method ranking under each named distribution.
pub fn distribution_sensitivity(
    matrix: &ScoreMatrix,
    dists: &[(String, ImportanceDistribution)],
) -> Result<SensitivityTable> {
    let methods: Vec<String> = matrix.methods().into_iter().map(String::from).collect();
    let table = matrix.score_table()?;
    let mut values = Vec::with_capacity(dists.len());
    let mut rankings = Vec::with_capacity(dists.len());
    for (name, d) in dists {
        if d.family_size() != matrix.family_size() {
            return Err(Error::SizeMismatch(format!(
                "distribution `{name}` covers {} points, family has {}",
                d.family_size(),
                matrix.family_size()
            )));
        }
        let v = table
            .iter()
            .map(|s| weighted_sum(s, d.mass()).map(|x| x.0))
            .collect::<Result<Vec<_>>>()?;
        rankings.push(
            rank_methods(&methods, &v, matrix.direction)
                .into_iter()
                .map(|k| methods[k].clone())
                .collect(),
        );
        values.push(v);
    }
    Ok(SensitivityTable {
        methods,
        distributions: dists.iter().map(|d| d.0.clone()).collect(),
        values,
        rankings,
    })
}

fn csv_writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::Writer::from_writer(out)
}

pub fn write_profiles<W: Write>(profiles: &[PerformanceProfile], out: W) -> Result<()> {
    let mut w = csv_writer(out);
    w.write_record([
        "method",
        "position",
        "point_index",
        "weight",
        "score",
        "contribution",
        "cumulative",
    ])?;
    for p in profiles {
        for (pos, pt) in p.points.iter().enumerate() {
            w.write_record([
                p.method.clone(),
                pos.to_string(),
                pt.index.to_string(),
                pt.weight.to_string(),
                pt.score.to_string(),
                pt.contribution.to_string(),
                pt.cumulative.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Plot-ready `(x, y, series)` rows; one cumulative and one per-point series per method.
pub fn write_profile_plot<W: Write>(profiles: &[PerformanceProfile], out: W) -> Result<()> {
    let mut w = csv_writer(out);
    w.write_record(["x", "y", "series"])?;
    for p in profiles {
        for (pos, pt) in p.points.iter().enumerate() {
            w.write_record([
                (pos + 1).to_string(),
                pt.cumulative.to_string(),
                format!("{}/cumulative", p.method),
            ])?;
        }
        for (pos, pt) in p.points.iter().enumerate() {
            w.write_record([
                (pos + 1).to_string(),
                pt.contribution.to_string(),
                format!("{}/contribution", p.method),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_rank_report<W: Write>(report: &RankReport, out: W) -> Result<()> {
    let mut w = csv_writer(out);
    w.write_record(["scope", "point_index", "ranking", "conflict"])?;
    w.write_record(["family", "", &report.family_ranking.join(" > "), "false"])?;
    for (i, r) in report.per_point_rankings.iter().enumerate() {
        let conflict = report.conflict_points.binary_search(&i).is_ok();
        w.write_record(["point", &i.to_string(), &r.join(" > "), &conflict.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_flip_pairs<W: Write>(report: &RankReport, out: W) -> Result<()> {
    let mut w = csv_writer(out);
    w.write_record(["point_index", "family_winner", "point_winner"])?;
    for f in &report.flip_pairs {
        w.write_record([f.point.to_string(), f.family_winner.clone(), f.point_winner.clone()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sensitivity<W: Write>(table: &SensitivityTable, out: W) -> Result<()> {
    let mut w = csv_writer(out);
    let mut header = vec!["distribution".to_string()];
    header.extend(table.methods.iter().cloned());
    header.push("ranking".into());
    w.write_record(&header)?;
    for (d, name) in table.distributions.iter().enumerate() {
        let mut rec = vec![name.clone()];
        rec.extend(table.values[d].iter().map(f64::to_string));
        rec.push(table.rankings[d].join(" > "));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
