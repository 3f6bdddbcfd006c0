//! Incidence structures: user x post (binary), user x page (counts),
//! user x topic (weights).

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::ingest::{Dataset, Interaction, TopicMixtures};

/// Compressed per-user adjacency over posts, with first/last like timestamps.
/// Every represented user has degree >= 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserPostIncidence {
    offsets: Vec<usize>,
    posts: Vec<u32>,
    first_ts: Vec<i64>,
    last_ts: Vec<i64>,
}

impl UserPostIncidence {
    /// Builds from records sorted by (user, post) with unique pairs, covering
    /// user indices 0..n_users.
    pub fn build(records: &[Interaction], n_users: usize) -> UserPostIncidence {
        let mut offsets = vec![0usize; n_users + 1];
        for r in records {
            offsets[r.user as usize + 1] += 1;
        }
        for i in 0..n_users {
            offsets[i + 1] += offsets[i];
        }
        let mut posts = Vec::with_capacity(records.len());
        let mut first_ts = vec![i64::MAX; n_users];
        let mut last_ts = vec![i64::MIN; n_users];
        for pair in records.windows(2) {
            debug_assert!((pair[0].user, pair[0].post) < (pair[1].user, pair[1].post));
        }
        for r in records {
            posts.push(r.post);
            let u = r.user as usize;
            first_ts[u] = first_ts[u].min(r.timestamp);
            last_ts[u] = last_ts[u].max(r.timestamp);
        }
        for u in 0..n_users {
            if offsets[u] == offsets[u + 1] {
                first_ts[u] = 0;
                last_ts[u] = 0;
            }
        }
        UserPostIncidence {
            offsets,
            posts,
            first_ts,
            last_ts,
        }
    }

    pub fn n_users(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn total_likes(&self) -> usize {
        self.posts.len()
    }

    pub fn degree(&self, user: usize) -> usize {
        self.offsets[user + 1] - self.offsets[user]
    }

    pub fn posts_of(&self, user: usize) -> &[u32] {
        &self.posts[self.offsets[user]..self.offsets[user + 1]]
    }

    /// First and last like timestamps for the user.
    pub fn timespan(&self, user: usize) -> (i64, i64) {
        (self.first_ts[user], self.last_ts[user])
    }

    /// Writes the structure as a little-endian binary cache.
    pub fn write_cache(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        let io = |e| Error::io(path, e);
        w.write_all(CACHE_MAGIC).map_err(io)?;
        w.write_all(&CACHE_VERSION.to_le_bytes()).map_err(io)?;
        w.write_all(&(self.n_users() as u64).to_le_bytes()).map_err(io)?;
        w.write_all(&(self.posts.len() as u64).to_le_bytes()).map_err(io)?;
        for &o in &self.offsets {
            w.write_all(&(o as u64).to_le_bytes()).map_err(io)?;
        }
        for &p in &self.posts {
            w.write_all(&p.to_le_bytes()).map_err(io)?;
        }
        for &t in &self.first_ts {
            w.write_all(&t.to_le_bytes()).map_err(io)?;
        }
        for &t in &self.last_ts {
            w.write_all(&t.to_le_bytes()).map_err(io)?;
        }
        w.flush().map_err(io)?;
        Ok(())
    }

    pub fn read_cache(path: &Path) -> Result<UserPostIncidence> {
        let mut buf = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut buf))
            .map_err(|e| Error::io(path, e))?;
        let bad = |detail: &str| Error::BadCache {
            path: path.to_path_buf(),
            detail: detail.to_string(),
        };
        let mut cur = 0usize;
        if take(&buf, &mut cur, 8).ok_or_else(|| bad("truncated"))? != CACHE_MAGIC {
            return Err(bad("bad magic"));
        }
        let read_u64 = |cur: &mut usize| -> Result<u64> {
            Ok(u64::from_le_bytes(
                take(&buf, cur, 8).ok_or_else(|| bad("truncated"))?.try_into().unwrap(),
            ))
        };
        let version = {
            let b = take(&buf, &mut cur, 4).ok_or_else(|| bad("truncated"))?;
            u32::from_le_bytes(b.try_into().unwrap())
        };
        if version != CACHE_VERSION {
            return Err(bad("unsupported version"));
        }
        let n_users = read_u64(&mut cur)? as usize;
        let n_likes = read_u64(&mut cur)? as usize;
        if buf.len().saturating_sub(cur)
            != (n_users + 1) * 8 + n_likes * 4 + n_users * 16
        {
            return Err(bad("size mismatch"));
        }
        let mut offsets = Vec::with_capacity(n_users + 1);
        for _ in 0..=n_users {
            offsets.push(read_u64(&mut cur)? as usize);
        }
        let mut posts = Vec::with_capacity(n_likes);
        for _ in 0..n_likes {
            let b = take(&buf, &mut cur, 4).ok_or_else(|| bad("truncated"))?;
            posts.push(u32::from_le_bytes(b.try_into().unwrap()));
        }
        let mut first_ts = Vec::with_capacity(n_users);
        for _ in 0..n_users {
            first_ts.push(read_u64(&mut cur)? as i64);
        }
        let mut last_ts = Vec::with_capacity(n_users);
        for _ in 0..n_users {
            last_ts.push(read_u64(&mut cur)? as i64);
        }
        if cur != buf.len() {
            return Err(bad("trailing bytes"));
        }
        if offsets.first() != Some(&0) || offsets.last() != Some(&n_likes) {
            return Err(bad("inconsistent offsets"));
        }
        if offsets.windows(2).any(|w| w[0] > w[1]) {
            return Err(bad("offsets not monotone"));
        }
        Ok(UserPostIncidence {
            offsets,
            posts,
            first_ts,
            last_ts,
        })
    }
}

const CACHE_MAGIC: &[u8; 8] = b"SELEXUPI";
const CACHE_VERSION: u32 = 1;

fn take<'a>(buf: &'a [u8], cur: &mut usize, n: usize) -> Option<&'a [u8]> {
    let s = buf.get(*cur..*cur + n)?;
    *cur += n;
    Some(s)
}

/// Per-user like counts over pages, sparse, sorted by page index.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UserPageVector {
    counts: Vec<(u32, u32)>,
}

impl UserPageVector {
    pub fn counts(&self) -> &[(u32, u32)] {
        &self.counts
    }

    pub fn n_pages(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&(_, c)| c as u64).sum()
    }
}

/// Counts likes per page for every user. `page_of_post` must cover every
/// liked post index.
pub fn aggregate_by_page(
    upi: &UserPostIncidence,
    page_of_post: &[u32],
) -> Result<Vec<UserPageVector>> {
    let mut out = Vec::with_capacity(upi.n_users());
    let mut scratch: Vec<u32> = Vec::new();
    for u in 0..upi.n_users() {
        scratch.clear();
        for &p in upi.posts_of(u) {
            match page_of_post.get(p as usize) {
                Some(&pg) => scratch.push(pg),
                None => return Err(Error::MissingPage { post: p }),
            }
        }
        scratch.sort_unstable();
        let mut counts: Vec<(u32, u32)> = Vec::new();
        for &pg in scratch.iter() {
            match counts.last_mut() {
                Some(last) if last.0 == pg => last.1 += 1,
                _ => counts.push((pg, 1)),
            }
        }
        out.push(UserPageVector { counts });
    }
    Ok(out)
}

/// Per-user dense topic weights: entry t sums p_t over the user's
/// mixture-bearing likes.
#[derive(Debug, Clone, PartialEq)]
pub struct UserTopicVector {
    pub weights: Vec<f64>,
    pub posts_with_mixture: u32,
}

/// Sums mixture rows per user. Posts without mixtures contribute nothing.
/// Summation runs in ascending post order so results are bit-stable.
pub fn aggregate_by_topic(
    upi: &UserPostIncidence,
    mixtures: &TopicMixtures,
) -> Vec<UserTopicVector> {
    let k = mixtures.n_topics;
    let mut out = Vec::with_capacity(upi.n_users());
    for u in 0..upi.n_users() {
        let mut weights = vec![0.0f64; k];
        let mut covered = 0u32;
        for &p in upi.posts_of(u) {
            if let Some(row) = mixtures.row_for_post(p) {
                for (w, v) in weights.iter_mut().zip(row) {
                    *w += v;
                }
                covered += 1;
            }
        }
        out.push(UserTopicVector {
            weights,
            posts_with_mixture: covered,
        });
    }
    out
}

/// All incidence structures for one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct BipartiteStructures {
    pub incidence: UserPostIncidence,
    pub pages: Vec<UserPageVector>,
    pub topics: Option<Vec<UserTopicVector>>,
}

pub fn build_structures(ds: &Dataset) -> Result<BipartiteStructures> {
    let incidence = UserPostIncidence::build(&ds.interactions, ds.n_users());
    let pages = aggregate_by_page(&incidence, &ds.page_of_post)?;
    let topics = ds
        .mixtures
        .as_ref()
        .map(|m| aggregate_by_topic(&incidence, m));
    Ok(BipartiteStructures {
        incidence,
        pages,
        topics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{InteractionBuilder, PostMetaBuilder, TopicBuilder};

    fn dataset(rows: &[(&str, &str, i64)]) -> Dataset {
        let mut ib = InteractionBuilder::new();
        for &(u, p, t) in rows {
            ib.push(u, p, t);
        }
        let mut pb = PostMetaBuilder::new();
        for (post, page) in [
            ("p1", "A"),
            ("p2", "A"),
            ("p3", "B"),
            ("p4", "C"),
        ] {
            pb.push(post, page).unwrap();
        }
        let mut tb = TopicBuilder::new(2);
        tb.push("p1", &[0.7, 0.3]).unwrap();
        tb.push("p2", &[0.2, 0.8]).unwrap();
        tb.push("p3", &[1.0, 0.0]).unwrap();
        Dataset::from_tables(
            ib.finish(),
            pb.finish(),
            Some(tb.finish(vec!["t0".into(), "t1".into()])),
        )
        .unwrap()
    }

    #[test]
    fn degrees_and_timespans() {
        let ds = dataset(&[
            ("u1", "p1", 100),
            ("u1", "p2", 50),
            ("u1", "p3", 200),
            ("u2", "p4", 7),
        ]);
        let upi = UserPostIncidence::build(&ds.interactions, ds.n_users());
        let u1 = ds.index.users.get("u1").unwrap() as usize;
        let u2 = ds.index.users.get("u2").unwrap() as usize;
        assert_eq!(upi.degree(u1), 3);
        assert_eq!(upi.degree(u2), 1);
        assert_eq!(upi.timespan(u1), (50, 200));
        assert_eq!(upi.timespan(u2), (7, 7));
        assert_eq!(upi.total_likes(), 4);
    }

    #[test]
    fn page_counts_conserve_degree() {
        let ds = dataset(&[
            ("u1", "p1", 1),
            ("u1", "p2", 2),
            ("u1", "p3", 3),
            ("u2", "p3", 4),
        ]);
        let bip = build_structures(&ds).unwrap();
        for u in 0..ds.n_users() {
            assert_eq!(bip.pages[u].total(), bip.incidence.degree(u) as u64);
            assert!(bip.pages[u].counts().iter().all(|&(_, c)| c >= 1));
        }
        let u1 = ds.index.users.get("u1").unwrap() as usize;
        let a = ds.index.pages.get("A").unwrap();
        let b = ds.index.pages.get("B").unwrap();
        assert_eq!(bip.pages[u1].counts(), &[(a, 2), (b, 1)]);
    }

    #[test]
    fn topic_weights_sum_to_covered_posts() {
        let ds = dataset(&[
            ("u1", "p1", 1),
            ("u1", "p2", 2),
            ("u2", "p4", 3),
        ]);
        let bip = build_structures(&ds).unwrap();
        let topics = bip.topics.as_ref().unwrap();
        let u1 = ds.index.users.get("u1").unwrap() as usize;
        let u2 = ds.index.users.get("u2").unwrap() as usize;
        assert_eq!(topics[u1].posts_with_mixture, 2);
        assert!((topics[u1].weights[0] - 0.9).abs() < 1e-12);
        assert!((topics[u1].weights[1] - 1.1).abs() < 1e-12);
        let total: f64 = topics[u1].weights.iter().sum();
        assert!((total - 2.0).abs() < 1e-9);
        assert_eq!(topics[u2].posts_with_mixture, 0);
        assert_eq!(topics[u2].weights, vec![0.0, 0.0]);
    }

    #[test]
    fn topic_aggregation_is_linear() {
        let ds_a = dataset(&[("u1", "p1", 1)]);
        let ds_b = dataset(&[("u1", "p2", 1), ("u1", "p3", 2)]);
        let ds_ab = dataset(&[("u1", "p1", 1), ("u1", "p2", 1), ("u1", "p3", 2)]);
        let tv = |ds: &Dataset| {
            let bip = build_structures(ds).unwrap();
            bip.topics.unwrap()[0].weights.clone()
        };
        let a = tv(&ds_a);
        let b = tv(&ds_b);
        let ab = tv(&ds_ab);
        for t in 0..2 {
            assert!((a[t] + b[t] - ab[t]).abs() < 1e-12);
        }
    }

    #[test]
    fn missing_page_mapping_is_fatal() {
        let ds = dataset(&[("u1", "p4", 1)]);
        let upi = UserPostIncidence::build(&ds.interactions, ds.n_users());
        let truncated = &ds.page_of_post[..2];
        let err = aggregate_by_page(&upi, truncated).unwrap_err();
        assert!(matches!(err, Error::MissingPage { .. }));
    }

    #[test]
    fn cache_round_trip() {
        let ds = dataset(&[
            ("u1", "p1", 100),
            ("u1", "p3", 50),
            ("u2", "p2", 9),
            ("u3", "p4", 77),
        ]);
        let upi = UserPostIncidence::build(&ds.interactions, ds.n_users());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("upi.bin");
        upi.write_cache(&path).unwrap();
        let back = UserPostIncidence::read_cache(&path).unwrap();
        assert_eq!(upi, back);
    }

    #[test]
    fn cache_rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.bin");
        std::fs::write(&path, b"not a cache").unwrap();
        assert!(matches!(
            UserPostIncidence::read_cache(&path).unwrap_err(),
            Error::BadCache { .. }
        ));
    }
}
