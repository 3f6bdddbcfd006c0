//! Per-user metrics: activity, lifetime, page/topic counts, Gini scores and
//! the sparsity-corrected normalized page score.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::bipartite::{BipartiteStructures, UserPageVector, UserPostIncidence};
use crate::error::{Error, Result};
use crate::ingest::{Dataset, TokenIndex, TopicMixtures};

pub const SECONDS_PER_DAY: f64 = 86400.0;

pub const PROFILE_HEADER: &str =
    "user_id,activity,lifetime_days,n_pages,n_topics,gini_topics,gini_pages_raw,gini_pages_min,gini_pages_norm";

fn validate_values(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::GiniEmpty);
    }
    let mut sum = 0.0;
    for &v in values {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::GiniInvalid);
        }
        sum += v;
    }
    if sum <= 0.0 {
        return Err(Error::GiniAllZero);
    }
    Ok(sum)
}

/// Gini index of a non-negative vector: half the relative mean absolute
/// difference, computed via the sorted form
/// `sum_i (2i - n - 1) v_(i) / (n * sum)`.
///
/// The numerator subtracts the minimum from every value; the weights sum to
/// zero so the result is unchanged, and constant vectors come out exactly 0.
pub fn gini(values: &[f64]) -> Result<f64> {
    let sum = validate_values(values)?;
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let n = sorted.len();
    let min = sorted[0];
    let mut num = 0.0;
    for (i, &v) in sorted.iter().enumerate() {
        let coef = (2 * (i + 1)) as f64 - n as f64 - 1.0;
        num += coef * (v - min);
    }
    Ok(num / (n as f64 * sum))
}

/// Gini index of a sparse vector: `nonzero` holds the stored entries and
/// `axis_len` the full vector length; the missing `axis_len - nonzero.len()`
/// entries are zeros. Equivalent to `gini` on the zero-padded vector.
pub fn gini_with_zeros(nonzero: &[f64], axis_len: usize) -> Result<f64> {
    if axis_len == 0 || nonzero.len() > axis_len {
        return Err(Error::GiniEmpty);
    }
    let sum = validate_values(nonzero)?;
    let mut sorted = nonzero.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let n = axis_len;
    let z = n - sorted.len();
    let mut num = 0.0;
    for (j, &v) in sorted.iter().enumerate() {
        let coef = (2 * (z + j + 1)) as f64 - n as f64 - 1.0;
        num += coef * v;
    }
    Ok(num / (n as f64 * sum))
}

/// Minimum page-Gini attainable with `n_likes` likes over `n_pages` pages:
/// `(n_pages - n_likes) / n_pages` when likes are fewer than pages, else 0.
/// For `n_likes > n_pages` not divisible by `n_pages` the true integer
/// minimum is slightly positive; this formula deliberately returns 0 there
/// (see `synth::brute_force_gini_min` for the exact value).
pub fn gini_min(n_likes: u64, n_pages: u64) -> f64 {
    debug_assert!(n_likes >= 1 && n_pages >= 1);
    if n_likes <= n_pages {
        (n_pages - n_likes) as f64 / n_pages as f64
    } else {
        0.0
    }
}

/// Rescales a raw Gini into [0,1] relative to its attainable minimum:
/// `(raw - min) / (1 - min)`.
pub fn normalize_gini(raw: f64, min: f64) -> f64 {
    debug_assert!((0.0..1.0).contains(&min));
    ((raw - min) / (1.0 - min)).clamp(0.0, 1.0)
}

/// Likes placed by the user (their degree).
pub fn activity(upi: &UserPostIncidence, user: usize) -> Result<u64> {
    if user >= upi.n_users() {
        return Err(Error::UnknownUser {
            index: user,
            n_users: upi.n_users(),
        });
    }
    Ok(upi.degree(user) as u64)
}

/// Days between the user's first and last like.
pub fn lifetime_days(upi: &UserPostIncidence, user: usize) -> Result<f64> {
    if user >= upi.n_users() {
        return Err(Error::UnknownUser {
            index: user,
            n_users: upi.n_users(),
        });
    }
    let (first, last) = upi.timespan(user);
    Ok((last - first) as f64 / SECONDS_PER_DAY)
}

/// Per-topic engagement thresholds: the corpus mean of each topic column.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicEngagementRule {
    pub thresholds: Vec<f64>,
}

/// Per-mixture-row lists of topics the post treats (proportion strictly above
/// the corpus mean).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreatedTopics {
    offsets: Vec<usize>,
    topics: Vec<u16>,
}

impl TreatedTopics {
    pub fn treated(&self, row: u32) -> &[u16] {
        &self.topics[self.offsets[row as usize]..self.offsets[row as usize + 1]]
    }

    pub fn n_rows(&self) -> usize {
        self.offsets.len() - 1
    }
}

/// Derives the binary post x topic engagement relation from the mixtures.
pub fn binarize_topics(
    mixtures: &TopicMixtures,
) -> Result<(TreatedTopics, TopicEngagementRule)> {
    let rows = mixtures.n_rows();
    let k = mixtures.n_topics;
    if rows == 0 {
        return Err(Error::EmptyInput("topic mixture corpus".to_string()));
    }
    let mut thresholds = vec![0.0f64; k];
    for r in 0..rows {
        for (acc, v) in thresholds.iter_mut().zip(mixtures.row(r as u32)) {
            *acc += v;
        }
    }
    for t in thresholds.iter_mut() {
        *t /= rows as f64;
    }
    let mut offsets = Vec::with_capacity(rows + 1);
    let mut topics = Vec::new();
    offsets.push(0);
    for r in 0..rows {
        let row = mixtures.row(r as u32);
        for (t, (&p, &thr)) in row.iter().zip(&thresholds).enumerate() {
            if p > thr {
                topics.push(t as u16);
            }
        }
        offsets.push(topics.len());
    }
    Ok((TreatedTopics { offsets, topics }, TopicEngagementRule { thresholds }))
}

/// Size of the union of treated-topic sets over the user's liked posts.
pub fn topics_per_user(
    liked_posts: &[u32],
    mixtures: &TopicMixtures,
    treated: &TreatedTopics,
) -> u32 {
    let mut bits = vec![0u64; mixtures.n_topics.div_ceil(64)];
    topics_union(liked_posts, mixtures, treated, &mut bits)
}

fn topics_union(
    liked_posts: &[u32],
    mixtures: &TopicMixtures,
    treated: &TreatedTopics,
    bits: &mut [u64],
) -> u32 {
    bits.fill(0);
    for &p in liked_posts {
        if let Some(row) = mixtures.row_of_post.get(p as usize).copied().flatten() {
            for &t in treated.treated(row) {
                bits[(t / 64) as usize] |= 1u64 << (t % 64);
            }
        }
    }
    bits.iter().map(|w| w.count_ones()).sum()
}

/// Distinct pages the user has liked on.
pub fn pages_per_user(pages: &UserPageVector) -> u32 {
    pages.n_pages() as u32
}

/// Everything computed per user. `n_topics` and `gini_topics` are `None` when
/// no topic mixtures were supplied; `gini_topics` is also `None` for users
/// none of whose likes carry a mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct UserProfile {
    pub user: u32,
    pub activity: u64,
    pub lifetime_days: f64,
    pub n_pages: u32,
    pub n_topics: Option<u32>,
    pub gini_topics: Option<f64>,
    pub gini_pages_raw: f64,
    pub gini_pages_min: f64,
    pub gini_pages_norm: f64,
}

struct Scratch {
    counts: Vec<f64>,
    bits: Vec<u64>,
}

/// Computes profiles for every user. Per-user work is parallel; each user's
/// result depends only on that user's data, so output is identical at any
/// thread count.
pub fn compute_profiles(
    ds: &Dataset,
    bip: &BipartiteStructures,
) -> Result<Vec<UserProfile>> {
    let n_users = bip.incidence.n_users();
    let n_pages = ds.n_pages() as u64;
    let topic_ctx = match (&ds.mixtures, &bip.topics) {
        (Some(m), Some(v)) if m.n_rows() > 0 => {
            let (treated, _rule) = binarize_topics(m)?;
            Some((m, treated, v))
        }
        _ => None,
    };
    let k = topic_ctx.as_ref().map_or(0, |(m, _, _)| m.n_topics);

    (0..n_users)
        .into_par_iter()
        .map_init(
            || Scratch {
                counts: Vec::new(),
                bits: vec![0u64; k.div_ceil(64)],
            },
            |scratch, u| -> Result<UserProfile> {
                let degree = bip.incidence.degree(u) as u64;
                let (first, last) = bip.incidence.timespan(u);
                let page_vec = &bip.pages[u];
                scratch.counts.clear();
                scratch
                    .counts
                    .extend(page_vec.counts().iter().map(|&(_, c)| c as f64));
                let raw = gini_with_zeros(&scratch.counts, n_pages as usize)?;
                let min = gini_min(degree, n_pages);
                let norm = normalize_gini(raw, min);
                let (n_topics, gini_topics) = match &topic_ctx {
                    None => (None, None),
                    Some((m, treated, vectors)) => {
                        let tv = &vectors[u];
                        let count = topics_union(
                            bip.incidence.posts_of(u),
                            m,
                            treated,
                            &mut scratch.bits,
                        );
                        let g = if tv.posts_with_mixture > 0 {
                            Some(gini(&tv.weights)?)
                        } else {
                            None
                        };
                        (Some(count), g)
                    }
                };
                Ok(UserProfile {
                    user: u as u32,
                    activity: degree,
                    lifetime_days: (last - first) as f64 / SECONDS_PER_DAY,
                    n_pages: pages_per_user(page_vec),
                    n_topics,
                    gini_topics,
                    gini_pages_raw: raw,
                    gini_pages_min: min,
                    gini_pages_norm: norm,
                })
            },
        )
        .collect()
}

fn push_real(line: &mut String, v: f64) {
    use std::fmt::Write as _;
    let _ = write!(line, "{v:.6}");
}

/// Writes the profile table. Reals use 6 decimals; unavailable scores are
/// empty fields.
pub fn write_profiles_csv(
    path: &Path,
    profiles: &[UserProfile],
    users: &TokenIndex,
) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "{PROFILE_HEADER}").map_err(io)?;
    let mut line = String::new();
    for p in profiles {
        use std::fmt::Write as _;
        line.clear();
        let _ = write!(line, "{},{},", users.token(p.user), p.activity);
        push_real(&mut line, p.lifetime_days);
        let _ = write!(line, ",{},", p.n_pages);
        if let Some(nt) = p.n_topics {
            let _ = write!(line, "{nt}");
        }
        line.push(',');
        if let Some(g) = p.gini_topics {
            push_real(&mut line, g);
        }
        line.push(',');
        push_real(&mut line, p.gini_pages_raw);
        line.push(',');
        push_real(&mut line, p.gini_pages_min);
        line.push(',');
        push_real(&mut line, p.gini_pages_norm);
        writeln!(w, "{line}").map_err(io)?;
    }
    w.flush().map_err(io)?;
    Ok(())
}
