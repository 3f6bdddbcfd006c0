//! Four-region classification of users on the (topic Gini, normalized page
//! Gini) plane.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::UserProfile;

pub const TAXONOMY_HEADER: &str = "user_id,gini_topics,gini_pages_norm,label";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TaxonomyLabel {
    /// High page concentration, spread over topics.
    MultiTopicSe,
    /// High page concentration and high topic concentration.
    SingleTopicSe,
    /// Topic-concentrated but spread over pages.
    ExposureByInterest,
    /// Low on both axes.
    LowActivityRegion,
}

impl TaxonomyLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            TaxonomyLabel::MultiTopicSe => "multi_topic_se",
            TaxonomyLabel::SingleTopicSe => "single_topic_se",
            TaxonomyLabel::ExposureByInterest => "exposure_by_interest",
            TaxonomyLabel::LowActivityRegion => "low_activity",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdSource {
    ComputedFromData,
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TaxonomyThresholds {
    pub t_topics: f64,
    pub t_pages: f64,
    pub source: ThresholdSource,
}

impl TaxonomyThresholds {
    pub fn explicit(t_topics: f64, t_pages: f64) -> Result<TaxonomyThresholds> {
        for (name, v) in [("t_topics", t_topics), ("t_pages", t_pages)] {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!(
                    "{name} must be a finite value in [0,1], got {v}"
                )));
            }
        }
        Ok(TaxonomyThresholds {
            t_topics,
            t_pages,
            source: ThresholdSource::Explicit,
        })
    }
}

/// Population means of the two scores. Page scores exist for every user, but
/// users without a topic score sit off the plane entirely, so both means run
/// over the topic-scored subpopulation to keep the two thresholds consistent.
pub fn compute_thresholds(profiles: &[UserProfile]) -> Result<TaxonomyThresholds> {
    let mut sum_t = 0.0;
    let mut sum_p = 0.0;
    let mut n = 0u64;
    for p in profiles {
        if let Some(gt) = p.gini_topics {
            sum_t += gt;
            sum_p += p.gini_pages_norm;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::EmptyInput(
            "no user has a topic score; cannot derive thresholds".to_string(),
        ));
    }
    Ok(TaxonomyThresholds {
        t_topics: sum_t / n as f64,
        t_pages: sum_p / n as f64,
        source: ThresholdSource::ComputedFromData,
    })
}

/// Region for one user. A score equal to its threshold counts as the low
/// side.
pub fn classify_user(
    gini_topics: f64,
    gini_pages_norm: f64,
    th: &TaxonomyThresholds,
) -> TaxonomyLabel {
    match (gini_pages_norm > th.t_pages, gini_topics > th.t_topics) {
        (true, false) => TaxonomyLabel::MultiTopicSe,
        (true, true) => TaxonomyLabel::SingleTopicSe,
        (false, true) => TaxonomyLabel::ExposureByInterest,
        (false, false) => TaxonomyLabel::LowActivityRegion,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct LabelCounts {
    pub multi_topic_se: u64,
    pub single_topic_se: u64,
    pub exposure_by_interest: u64,
    pub low_activity: u64,
}

impl LabelCounts {
    pub fn total(&self) -> u64 {
        self.multi_topic_se + self.single_topic_se + self.exposure_by_interest + self.low_activity
    }

    fn bump(&mut self, label: TaxonomyLabel) {
        match label {
            TaxonomyLabel::MultiTopicSe => self.multi_topic_se += 1,
            TaxonomyLabel::SingleTopicSe => self.single_topic_se += 1,
            TaxonomyLabel::ExposureByInterest => self.exposure_by_interest += 1,
            TaxonomyLabel::LowActivityRegion => self.low_activity += 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaxonomyRow {
    pub user: u32,
    pub gini_topics: f64,
    pub gini_pages_norm: f64,
    pub label: TaxonomyLabel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub thresholds: TaxonomyThresholds,
    pub rows: Vec<TaxonomyRow>,
    pub counts: LabelCounts,
    /// Users skipped because one of the two scores was unavailable.
    pub unscored: u64,
}

/// Labels every user that has both scores. Thresholds default to the
/// population means when not given.
pub fn classify_population(
    profiles: &[UserProfile],
    thresholds: Option<TaxonomyThresholds>,
) -> Result<Classification> {
    let th = match thresholds {
        Some(t) => t,
        None => compute_thresholds(profiles)?,
    };
    let mut rows = Vec::new();
    let mut counts = LabelCounts::default();
    let mut unscored = 0u64;
    for p in profiles {
        match p.gini_topics {
            Some(gt) => {
                let label = classify_user(gt, p.gini_pages_norm, &th);
                counts.bump(label);
                rows.push(TaxonomyRow {
                    user: p.user,
                    gini_topics: gt,
                    gini_pages_norm: p.gini_pages_norm,
                    label,
                });
            }
            None => unscored += 1,
        }
    }
    Ok(Classification {
        thresholds: th,
        rows,
        counts,
        unscored,
    })
}

pub fn write_taxonomy_csv(
    classification: &Classification,
    tokens: &[String],
    path: &Path,
) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(f);
    let io = |e| Error::io(path, e);
    writeln!(w, "{TAXONOMY_HEADER}").map_err(io)?;
    for row in &classification.rows {
        let token = tokens.get(row.user as usize).ok_or(Error::UnknownUser {
            index: row.user as usize,
            n_users: tokens.len(),
        })?;
        writeln!(
            w,
            "{},{:.6},{:.6},{}",
            token,
            row.gini_topics,
            row.gini_pages_norm,
            row.label.as_str()
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaxonomySummary {
    pub thresholds: TaxonomyThresholds,
    pub counts: LabelCounts,
    pub fractions: LabelFractions,
    pub n_scored: u64,
    pub n_unscored: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LabelFractions {
    pub multi_topic_se: f64,
    pub single_topic_se: f64,
    pub exposure_by_interest: f64,
    pub low_activity: f64,
}

impl TaxonomySummary {
    pub fn from_classification(c: &Classification) -> TaxonomySummary {
        let total = c.counts.total();
        let frac = |x: u64| {
            if total == 0 {
                0.0
            } else {
                x as f64 / total as f64
            }
        };
        TaxonomySummary {
            thresholds: c.thresholds,
            counts: c.counts,
            fractions: LabelFractions {
                multi_topic_se: frac(c.counts.multi_topic_se),
                single_topic_se: frac(c.counts.single_topic_se),
                exposure_by_interest: frac(c.counts.exposure_by_interest),
                low_activity: frac(c.counts.low_activity),
            },
            n_scored: total,
            n_unscored: c.unscored,
        }
    }
}

pub fn write_taxonomy_summary(c: &Classification, path: &Path) -> Result<()> {
    let summary = TaxonomySummary::from_classification(c);
    let json = serde_json::to_string_pretty(&summary)
        .map_err(|e| Error::Config(format!("summary serialization failed: {e}")))?;
    std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile(user: u32, gt: Option<f64>, gp: f64) -> UserProfile {
        UserProfile {
            user,
            activity: 5,
            lifetime_days: 1.0,
            n_pages: 2,
            n_topics: gt.map(|_| 3),
            gini_topics: gt,
            gini_pages_raw: gp,
            gini_pages_min: 0.0,
            gini_pages_norm: gp,
        }
    }

    fn th(t_topics: f64, t_pages: f64) -> TaxonomyThresholds {
        TaxonomyThresholds::explicit(t_topics, t_pages).unwrap()
    }

    #[test]
    fn quadrants_map_to_the_four_labels() {
        let t = th(0.5, 0.5);
        assert_eq!(classify_user(0.2, 0.9, &t), TaxonomyLabel::MultiTopicSe);
        assert_eq!(classify_user(0.9, 0.9, &t), TaxonomyLabel::SingleTopicSe);
        assert_eq!(classify_user(0.9, 0.2, &t), TaxonomyLabel::ExposureByInterest);
        assert_eq!(classify_user(0.2, 0.2, &t), TaxonomyLabel::LowActivityRegion);
    }

    #[test]
    fn threshold_equality_falls_on_the_low_side() {
        let t = th(0.3, 0.6);
        assert_eq!(classify_user(0.3, 0.6, &t), TaxonomyLabel::LowActivityRegion);
        assert_eq!(classify_user(0.3, 0.61, &t), TaxonomyLabel::MultiTopicSe);
        assert_eq!(classify_user(0.31, 0.6, &t), TaxonomyLabel::ExposureByInterest);
    }

    #[test]
    fn computed_thresholds_are_means_over_topic_scored_users() {
        let profiles = vec![
            profile(0, Some(0.2), 0.4),
            profile(1, Some(0.6), 0.8),
            profile(2, None, 0.9),
        ];
        let t = compute_thresholds(&profiles).unwrap();
        assert!((t.t_topics - 0.4).abs() < 1e-12);
        assert!((t.t_pages - 0.6).abs() < 1e-12);
        assert_eq!(t.source, ThresholdSource::ComputedFromData);
    }

    #[test]
    fn no_scored_user_is_fatal() {
        let profiles = vec![profile(0, None, 0.5), profile(1, None, 0.7)];
        assert!(matches!(
            compute_thresholds(&profiles).unwrap_err(),
            Error::EmptyInput(_)
        ));
    }

    #[test]
    fn classification_partitions_scored_users() {
        let profiles = vec![
            profile(0, Some(0.1), 0.9),
            profile(1, Some(0.9), 0.9),
            profile(2, Some(0.9), 0.1),
            profile(3, Some(0.1), 0.1),
            profile(4, None, 0.5),
        ];
        let c = classify_population(&profiles, Some(th(0.5, 0.5))).unwrap();
        assert_eq!(c.rows.len(), 4);
        assert_eq!(c.counts.total(), 4);
        assert_eq!(c.counts.multi_topic_se, 1);
        assert_eq!(c.counts.single_topic_se, 1);
        assert_eq!(c.counts.exposure_by_interest, 1);
        assert_eq!(c.counts.low_activity, 1);
        assert_eq!(c.unscored, 1);
    }

    #[test]
    fn raising_a_threshold_never_moves_users_toward_the_high_side() {
        let profiles: Vec<UserProfile> = (0..50)
            .map(|i| {
                let gt = (i as f64) / 49.0;
                let gp = ((i * 7) % 50) as f64 / 49.0;
                profile(i, Some(gt), gp)
            })
            .collect();
        let lo = classify_population(&profiles, Some(th(0.2, 0.2))).unwrap();
        let hi = classify_population(&profiles, Some(th(0.8, 0.8))).unwrap();
        let high_side = |c: &Classification| {
            c.counts.multi_topic_se + c.counts.single_topic_se + c.counts.exposure_by_interest
        };
        assert!(high_side(&hi) <= high_side(&lo));
        assert!(hi.counts.low_activity >= lo.counts.low_activity);
    }

    #[test]
    fn single_user_population_lands_on_the_low_side_of_its_own_mean() {
        let profiles = vec![profile(0, Some(0.4), 0.7)];
        let c = classify_population(&profiles, None).unwrap();
        assert_eq!(c.rows[0].label, TaxonomyLabel::LowActivityRegion);
    }

    #[test]
    fn explicit_threshold_validation() {
        assert!(TaxonomyThresholds::explicit(0.5, 1.5).is_err());
        assert!(TaxonomyThresholds::explicit(f64::NAN, 0.5).is_err());
        assert!(TaxonomyThresholds::explicit(0.0, 1.0).is_ok());
    }

    #[test]
    fn csv_and_summary_outputs() {
        let profiles = vec![profile(0, Some(0.1), 0.9), profile(1, Some(0.9), 0.1)];
        let c = classify_population(&profiles, Some(th(0.5, 0.5))).unwrap();
        let tokens = vec!["alice".to_string(), "bob".to_string()];
        let dir = tempfile::tempdir().unwrap();
        let csv_path = dir.path().join("taxonomy.csv");
        write_taxonomy_csv(&c, &tokens, &csv_path).unwrap();
        let text = std::fs::read_to_string(&csv_path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), TAXONOMY_HEADER);
        assert_eq!(
            lines.next().unwrap(),
            "alice,0.100000,0.900000,multi_topic_se"
        );
        assert_eq!(
            lines.next().unwrap(),
            "bob,0.900000,0.100000,exposure_by_interest"
        );
        assert!(lines.next().is_none());

        let json_path = dir.path().join("summary.json");
        write_taxonomy_summary(&c, &json_path).unwrap();
        let parsed: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&json_path).unwrap()).unwrap();
        assert_eq!(parsed["n_scored"], 2);
        assert_eq!(parsed["counts"]["multi_topic_se"], 1);
        assert_eq!(parsed["thresholds"]["source"], "explicit");
        assert_eq!(parsed["fractions"]["exposure_by_interest"], 0.5);
    }
}
