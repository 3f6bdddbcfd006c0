//! Seeded synthetic dataset generator with a known ground-truth concentration
//! parameter, plus brute-force reference implementations of the Gini kernels.

use std::collections::HashSet;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActivityLaw {
    /// Every user places exactly this many likes.
    Constant(u64),
    /// Likes drawn from P(k) proportional to k^-exponent on [min, max].
    PowerLaw { exponent: f64, min: u64, max: u64 },
}

impl ActivityLaw {
    pub fn max_activity(&self) -> u64 {
        match *self {
            ActivityLaw::Constant(k) => k,
            ActivityLaw::PowerLaw { max, .. } => max,
        }
    }
}

impl FromStr for ActivityLaw {
    type Err = Error;

    fn from_str(s: &str) -> Result<ActivityLaw> {
        let parts: Vec<&str> = s.split(':').collect();
        let err = || Error::Config(format!("bad activity law {s:?}, expected const:K or powerlaw:EXP:MIN:MAX"));
        match parts.as_slice() {
            ["const", k] => k.parse().map(ActivityLaw::Constant).map_err(|_| err()),
            ["powerlaw", exp, min, max] => {
                let exponent: f64 = exp.parse().map_err(|_| err())?;
                let min: u64 = min.parse().map_err(|_| err())?;
                let max: u64 = max.parse().map_err(|_| err())?;
                Ok(ActivityLaw::PowerLaw { exponent, min, max })
            }
            _ => Err(err()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_users: u64,
    pub n_pages: u64,
    pub n_posts: u64,
    pub n_topics: u64,
    /// Probability that a like targets the user's home page.
    pub loyalty: f64,
    /// Concentration of the symmetric simplex sampler for post mixtures;
    /// small values give peaked mixtures, large values near-uniform ones.
    pub topic_concentration: f64,
    pub activity: ActivityLaw,
    pub time_horizon_days: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_users: 1000,
            n_pages: 20,
            n_posts: 2000,
            n_topics: 10,
            loyalty: 0.8,
            topic_concentration: 1.0,
            activity: ActivityLaw::Constant(20),
            time_horizon_days: 365.0,
            seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n_users < 1 || self.n_pages < 1 || self.n_posts < 1 || self.n_topics < 1 {
            return bad("all counts must be at least 1".to_string());
        }
        if self.n_posts > u32::MAX as u64 || self.n_pages > u32::MAX as u64 {
            return bad("post and page counts must fit 32 bits".to_string());
        }
        if !(0.0..=1.0).contains(&self.loyalty) {
            return bad(format!("loyalty must be in [0,1], got {}", self.loyalty));
        }
        if !(self.topic_concentration > 0.0) || !self.topic_concentration.is_finite() {
            return bad(format!(
                "topic concentration must be positive, got {}",
                self.topic_concentration
            ));
        }
        if !(self.time_horizon_days >= 0.0) || !self.time_horizon_days.is_finite() {
            return bad(format!(
                "time horizon must be non-negative, got {}",
                self.time_horizon_days
            ));
        }
        match self.activity {
            ActivityLaw::Constant(k) if k < 1 => {
                return bad("constant activity must be at least 1".to_string())
            }
            ActivityLaw::PowerLaw { exponent, min, max } => {
                if min < 1 || max < min {
                    return bad(format!("power law range [{min},{max}] invalid"));
                }
                if !(exponent > 0.0) || !exponent.is_finite() {
                    return bad(format!("power law exponent must be positive, got {exponent}"));
                }
            }
            _ => {}
        }
        if self.activity.max_activity() > self.n_posts {
            return Err(Error::Infeasible(format!(
                "activity up to {} exceeds the {} available posts",
                self.activity.max_activity(),
                self.n_posts
            )));
        }
        Ok(())
    }

    /// Reads a flat `key = value` file over the default config. Lines starting
    /// with `#` and blank lines are ignored.
    pub fn from_kv_file(path: &Path) -> Result<SynthConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = SynthConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key=value, got {raw:?}", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            let parse_err =
                |what: &str| Error::Config(format!("line {}: bad {what}: {value:?}", lineno + 1));
            match key {
                "n_users" => cfg.n_users = value.parse().map_err(|_| parse_err("n_users"))?,
                "n_pages" => cfg.n_pages = value.parse().map_err(|_| parse_err("n_pages"))?,
                "n_posts" => cfg.n_posts = value.parse().map_err(|_| parse_err("n_posts"))?,
                "n_topics" => cfg.n_topics = value.parse().map_err(|_| parse_err("n_topics"))?,
                "loyalty" => cfg.loyalty = value.parse().map_err(|_| parse_err("loyalty"))?,
                "alpha" => {
                    cfg.topic_concentration = value.parse().map_err(|_| parse_err("alpha"))?
                }
                "activity" => cfg.activity = value.parse()?,
                "horizon_days" => {
                    cfg.time_horizon_days = value.parse().map_err(|_| parse_err("horizon_days"))?
                }
                "seed" => cfg.seed = value.parse().map_err(|_| parse_err("seed"))?,
                other => {
                    return Err(Error::Config(format!(
                        "line {}: unknown key {other:?}",
                        lineno + 1
                    )))
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// A generated dataset held in memory, in the same shape as the input files.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub config: SynthConfig,
    pub page_of_post: Vec<u32>,
    /// n_posts x n_topics, rows summing to 1.
    pub mixtures: Vec<f64>,
    /// (user, post, timestamp) in generation order: user-major, likes in draw
    /// order.
    pub likes: Vec<(u64, u32, i64)>,
}

/// Paths of the three files written by `write_dataset`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthPaths {
    pub interactions: PathBuf,
    pub posts: PathBuf,
    pub topics: PathBuf,
}

fn corpus_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    rng
}

fn user_rng(seed: u64, user: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(user + 1);
    rng
}

fn sample_unliked(
    rng: &mut ChaCha8Rng,
    pool: &[u32],
    liked: &HashSet<u32>,
) -> Option<u32> {
    if pool.is_empty() {
        return None;
    }
    // Rejection sampling is uniform over the unliked posts of the pool; the
    // exact scan below is the same distribution, just slower, so giving up on
    // rejection after a bounded number of tries does not bias the draw.
    for _ in 0..64 {
        let cand = pool[rng.random_range(0..pool.len())];
        if !liked.contains(&cand) {
            return Some(cand);
        }
    }
    let remaining: Vec<u32> = pool.iter().copied().filter(|p| !liked.contains(p)).collect();
    if remaining.is_empty() {
        None
    } else {
        Some(remaining[rng.random_range(0..remaining.len())])
    }
}

/// Generates a dataset. The same config (seed included) always produces the
/// same value; per-user draws come from independent substreams keyed by user
/// index, so users could be generated in any order or in parallel.
pub fn generate(config: &SynthConfig) -> Result<SynthData> {
    config.validate()?;
    let n_posts = config.n_posts as usize;
    let n_pages = config.n_pages as u32;
    let k = config.n_topics as usize;

    let mut rng = corpus_rng(config.seed);
    let mut page_of_post = Vec::with_capacity(n_posts);
    for _ in 0..n_posts {
        page_of_post.push(rng.random_range(0..n_pages));
    }
    let gamma = Gamma::new(config.topic_concentration, 1.0)
        .map_err(|e| Error::Config(format!("bad concentration: {e}")))?;
    let mut mixtures = vec![0.0f64; n_posts * k];
    for row in mixtures.chunks_mut(k) {
        let mut ok = false;
        for _ in 0..64 {
            let mut sum = 0.0;
            for slot in row.iter_mut() {
                let v = gamma.sample(&mut rng);
                *slot = v;
                sum += v;
            }
            if sum.is_finite() && sum > 0.0 {
                for slot in row.iter_mut() {
                    *slot /= sum;
                }
                ok = true;
                break;
            }
        }
        if !ok {
            return Err(Error::Config(
                "simplex sampler produced no positive mass; concentration too small".to_string(),
            ));
        }
    }

    let mut posts_of_page: Vec<Vec<u32>> = vec![Vec::new(); n_pages as usize];
    for (post, &pg) in page_of_post.iter().enumerate() {
        posts_of_page[pg as usize].push(post as u32);
    }
    let all_posts: Vec<u32> = (0..n_posts as u32).collect();

    let powerlaw_cdf = match config.activity {
        ActivityLaw::Constant(_) => Vec::new(),
        ActivityLaw::PowerLaw { exponent, min, max } => {
            let mut acc = 0.0;
            let mut cdf = Vec::with_capacity((max - min + 1) as usize);
            for kk in min..=max {
                acc += (kk as f64).powf(-exponent);
                cdf.push(acc);
            }
            cdf
        }
    };

    let horizon_secs = (config.time_horizon_days * 86400.0).round() as i64;
    let mut likes = Vec::new();
    let mut liked: HashSet<u32> = HashSet::new();

    for u in 0..config.n_users {
        let mut rng = user_rng(config.seed, u);
        let home = rng.random_range(0..n_pages);
        let act = match config.activity {
            ActivityLaw::Constant(kk) => kk,
            ActivityLaw::PowerLaw { min, .. } => {
                let total = *powerlaw_cdf.last().unwrap();
                let r = rng.random::<f64>() * total;
                let idx = powerlaw_cdf.partition_point(|&c| c <= r);
                min + (idx as u64).min(powerlaw_cdf.len() as u64 - 1)
            }
        };
        if config.loyalty == 1.0 && act as usize > posts_of_page[home as usize].len() {
            return Err(Error::Infeasible(format!(
                "user {} needs {} likes but home page {} has only {} posts under loyalty 1",
                u,
                act,
                home,
                posts_of_page[home as usize].len()
            )));
        }
        liked.clear();
        for _ in 0..act {
            let page = if rng.random::<f64>() < config.loyalty {
                home
            } else {
                rng.random_range(0..n_pages)
            };
            let post = sample_unliked(&mut rng, &posts_of_page[page as usize], &liked)
                .or_else(|| sample_unliked(&mut rng, &all_posts, &liked))
                .ok_or_else(|| {
                    Error::Infeasible(format!("user {u} exhausted all {n_posts} posts"))
                })?;
            liked.insert(post);
            let ts = if horizon_secs == 0 {
                0
            } else {
                rng.random_range(0..=horizon_secs)
            };
            likes.push((u, post, ts));
        }
    }

    Ok(SynthData {
        config: config.clone(),
        page_of_post,
        mixtures,
        likes,
    })
}

fn token_width(count: u64) -> usize {
    count.saturating_sub(1).to_string().len().max(4)
}

impl SynthData {
    pub fn user_token(&self, u: u64) -> String {
        format!("u{:0w$}", u, w = token_width(self.config.n_users))
    }

    pub fn post_token(&self, p: u32) -> String {
        format!("p{:0w$}", p, w = token_width(self.config.n_posts))
    }

    pub fn page_token(&self, g: u32) -> String {
        format!("pg{:0w$}", g, w = token_width(self.config.n_pages))
    }

    /// Writes interactions.csv, posts.csv and topics.csv into `dir`.
    pub fn write_dataset(&self, dir: &Path) -> Result<SynthPaths> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let paths = SynthPaths {
            interactions: dir.join("interactions.csv"),
            posts: dir.join("posts.csv"),
            topics: dir.join("topics.csv"),
        };

        let k = self.config.n_topics as usize;
        {
            let path = &paths.posts;
            let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
            let mut w = std::io::BufWriter::new(f);
            let io = |e| Error::io(path, e);
            writeln!(w, "post_id,page_id").map_err(io)?;
            for (post, &pg) in self.page_of_post.iter().enumerate() {
                writeln!(w, "{},{}", self.post_token(post as u32), self.page_token(pg))
                    .map_err(io)?;
            }
            w.flush().map_err(io)?;
        }
        {
            let path = &paths.topics;
            let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
            let mut w = std::io::BufWriter::new(f);
            let io = |e| Error::io(path, e);
            let mut header = String::from("post_id");
            for t in 0..k {
                header.push_str(&format!(",t{t}"));
            }
            writeln!(w, "{header}").map_err(io)?;
            let mut line = String::new();
            for (post, row) in self.mixtures.chunks(k).enumerate() {
                use std::fmt::Write as _;
                line.clear();
                line.push_str(&self.post_token(post as u32));
                for v in row {
                    let _ = write!(line, ",{v:.9}");
                }
                writeln!(w, "{line}").map_err(io)?;
            }
            w.flush().map_err(io)?;
        }
        {
            let path = &paths.interactions;
            let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
            let mut w = std::io::BufWriter::new(f);
            let io = |e| Error::io(path, e);
            writeln!(w, "user_id,post_id,timestamp").map_err(io)?;
            for &(u, p, ts) in &self.likes {
                writeln!(w, "{},{},{}", self.user_token(u), self.post_token(p), ts)
                    .map_err(io)?;
            }
            w.flush().map_err(io)?;
        }
        Ok(paths)
    }
}

/// Convenience: generate and write in one step.
pub fn generate_to_dir(config: &SynthConfig, dir: &Path) -> Result<SynthPaths> {
    generate(config)?.write_dataset(dir)
}

/// Literal double-sum Gini: `sum_ij |y_i - y_j| / (2 n^2 mu)`. The reference
/// the fast kernel is checked against.
pub fn brute_force_gini(values: &[f64]) -> Result<f64> {
    debug_assert!(values.len() <= 4096);
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
    let n = values.len();
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            total += (values[i] - values[j]).abs();
        }
    }
    // delta / (2 mu) with delta = total / n^2 and mu = sum / n collapses to
    // a single division
    Ok(total / (2.0 * n as f64 * sum))
}

/// Exact minimum of the page Gini over all integer allocations of `n_likes`
/// likes to `n_pages` pages, by exhaustive enumeration.
pub fn brute_force_gini_min(n_likes: u64, n_pages: u64) -> Result<f64> {
    if n_likes == 0 || n_pages == 0 {
        return Err(Error::GiniEmpty);
    }
    if n_likes > 32 || n_pages > 16 {
        return Err(Error::SearchTooLarge {
            likes: n_likes,
            pages: n_pages,
        });
    }
    // Gini is permutation invariant, so only non-increasing allocations are
    // enumerated.
    let mut alloc = vec![0u64; n_pages as usize];
    let mut best = f64::INFINITY;
    fn place(
        alloc: &mut Vec<u64>,
        idx: usize,
        remaining: u64,
        cap: u64,
        best: &mut f64,
    ) -> Result<()> {
        let pages_left = alloc.len() - idx;
        if pages_left == 1 {
            if remaining <= cap {
                alloc[idx] = remaining;
                let values: Vec<f64> = alloc.iter().map(|&c| c as f64).collect();
                let g = brute_force_gini(&values)?;
                if g < *best {
                    *best = g;
                }
            }
            return Ok(());
        }
        let hi = cap.min(remaining);
        for v in (0..=hi).rev() {
            // the rest must fit under v each
            if remaining - v > v * (pages_left as u64 - 1) {
                break;
            }
            alloc[idx] = v;
            place(alloc, idx + 1, remaining - v, v, best)?;
        }
        Ok(())
    }
    place(&mut alloc, 0, n_likes, n_likes, &mut best)?;
    Ok(best)
}
