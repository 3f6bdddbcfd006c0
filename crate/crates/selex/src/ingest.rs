//! Ingestion of interaction logs, post metadata, and topic mixture tables.
//!
//! String identifiers are re-indexed to dense integers. Index assignment
//! follows the sorted order of the distinct tokens, so re-ingesting the same
//! data yields identical indices regardless of row order. Topic columns are
//! the one exception: they keep their header column order, which is already
//! deterministic.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::BufRead;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const INTERACTIONS_HEADER: &str = "user_id,post_id,timestamp";
pub const POSTS_HEADER: &str = "post_id,page_id";

/// Row-sum tolerance for topic mixture validation.
pub const MIXTURE_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Jsonl,
}

/// One deduplicated like event, with ids resolved against the dataset index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Interaction {
    pub user: u32,
    pub post: u32,
    pub timestamp: i64,
}

fn valid_token(tok: &[u8]) -> bool {
    !tok.is_empty()
        && tok
            .iter()
            .all(|&b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
}

/// Bidirectional token <-> dense index mapping; indices follow sorted token order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TokenIndex {
    tokens: Vec<String>,
    lookup: HashMap<String, u32>,
}

impl TokenIndex {
    /// Builds the index from distinct tokens in arbitrary order. Returns the
    /// index plus the remap table from input position to final index.
    fn from_distinct(tokens: Vec<String>) -> (TokenIndex, Vec<u32>) {
        let mut order: Vec<u32> = (0..tokens.len() as u32).collect();
        order.sort_unstable_by(|&a, &b| tokens[a as usize].cmp(&tokens[b as usize]));
        let mut remap = vec![0u32; tokens.len()];
        let mut sorted = Vec::with_capacity(tokens.len());
        let mut lookup = HashMap::with_capacity(tokens.len());
        for (rank, &old) in order.iter().enumerate() {
            remap[old as usize] = rank as u32;
            sorted.push(tokens[old as usize].clone());
            lookup.insert(tokens[old as usize].clone(), rank as u32);
        }
        (TokenIndex { tokens: sorted, lookup }, remap)
    }

    pub fn get(&self, token: &str) -> Option<u32> {
        self.lookup.get(token).copied()
    }

    pub fn token(&self, idx: u32) -> &str {
        &self.tokens[idx as usize]
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// Dense indices for every identifier space in a dataset. Topics are indexed
/// by column position and carry their header names.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IdIndex {
    pub users: TokenIndex,
    pub posts: TokenIndex,
    pub pages: TokenIndex,
    pub topics: Vec<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct InteractionStats {
    pub rows: u64,
    pub kept: u64,
    pub duplicates: u64,
    pub malformed: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct PostStats {
    pub rows: u64,
    pub kept: u64,
    pub duplicates: u64,
    pub malformed: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct TopicStats {
    pub rows: u64,
    pub kept: u64,
    pub badsum: u64,
    pub malformed: u64,
    pub duplicates: u64,
    pub unknown_posts: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct IngestStats {
    pub interactions: InteractionStats,
    pub posts: PostStats,
    pub topics: Option<TopicStats>,
    pub posts_without_mixture: u64,
}

#[derive(Default)]
struct Interner {
    tokens: Vec<String>,
    lookup: HashMap<String, u32>,
}

impl Interner {
    fn intern(&mut self, tok: &str) -> u32 {
        if let Some(&i) = self.lookup.get(tok) {
            return i;
        }
        let i = u32::try_from(self.tokens.len()).expect("identifier space overflow");
        self.tokens.push(tok.to_string());
        self.lookup.insert(tok.to_string(), i);
        i
    }
}

/// Accumulates interaction rows; `finish` deduplicates and freezes stats.
pub struct InteractionBuilder {
    users: Interner,
    posts: Interner,
    rows: Vec<(u32, u32, i64)>,
    stats: InteractionStats,
}

impl Default for InteractionBuilder {
    fn default() -> Self {
        Self::new()
    }
}

impl InteractionBuilder {
    pub fn new() -> Self {
        InteractionBuilder {
            users: Interner::default(),
            posts: Interner::default(),
            rows: Vec::new(),
            stats: InteractionStats::default(),
        }
    }

    /// Adds one row; invalid tokens or negative timestamps count as malformed.
    pub fn push(&mut self, user: &str, post: &str, timestamp: i64) {
        self.stats.rows += 1;
        if !valid_token(user.as_bytes()) || !valid_token(post.as_bytes()) || timestamp < 0 {
            self.stats.malformed += 1;
            return;
        }
        let u = self.users.intern(user);
        let p = self.posts.intern(post);
        self.rows.push((u, p, timestamp));
    }

    fn push_bytes(&mut self, user: &[u8], post: &[u8], ts: &[u8]) {
        self.stats.rows += 1;
        if !valid_token(user) || !valid_token(post) {
            self.stats.malformed += 1;
            return;
        }
        let ts = match std::str::from_utf8(ts).ok().and_then(|s| s.parse::<i64>().ok()) {
            Some(v) if v >= 0 => v,
            _ => {
                self.stats.malformed += 1;
                return;
            }
        };
        // valid_token guarantees ASCII
        let u = std::str::from_utf8(user).unwrap();
        let p = std::str::from_utf8(post).unwrap();
        let u = self.users.intern(u);
        let p = self.posts.intern(p);
        self.rows.push((u, p, ts));
    }

    /// Sorts, drops duplicate (user, post) pairs keeping the earliest
    /// timestamp, and seals the table. Keeping the minimum timestamp makes the
    /// result independent of input row order.
    pub fn finish(mut self) -> InteractionTable {
        self.rows.sort_unstable();
        let mut kept = 0usize;
        let mut dups = 0u64;
        let mut i = 0usize;
        while i < self.rows.len() {
            let (u, p, ts) = self.rows[i];
            self.rows[kept] = (u, p, ts);
            kept += 1;
            let mut j = i + 1;
            while j < self.rows.len() && self.rows[j].0 == u && self.rows[j].1 == p {
                dups += 1;
                j += 1;
            }
            i = j;
        }
        self.rows.truncate(kept);
        self.stats.duplicates = dups;
        self.stats.kept = kept as u64;
        InteractionTable {
            users: self.users.tokens,
            posts: self.posts.tokens,
            rows: self.rows,
            stats: self.stats,
        }
    }
}

/// Parsed, deduplicated interactions with provisional (file-order) ids.
#[derive(Debug)]
pub struct InteractionTable {
    users: Vec<String>,
    posts: Vec<String>,
    rows: Vec<(u32, u32, i64)>,
    pub stats: InteractionStats,
}

impl InteractionTable {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }
}

#[derive(Deserialize)]
struct JsonInteraction {
    user_id: String,
    post_id: String,
    timestamp: i64,
}

pub fn parse_interactions(path: &Path, format: Format) -> Result<InteractionTable> {
    match format {
        Format::Csv => parse_interactions_csv(path),
        Format::Jsonl => parse_interactions_jsonl(path),
    }
}

fn csv_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::Csv {
            path: path.to_path_buf(),
            source: e,
        })
}

fn check_header(path: &Path, rec: &csv::ByteRecord, expected: &str) -> Result<()> {
    let got: Vec<&str> = rec
        .iter()
        .map(|f| std::str::from_utf8(f).unwrap_or("<non-utf8>"))
        .collect();
    let got = got.join(",");
    if got != expected {
        return Err(Error::BadHeader {
            path: path.to_path_buf(),
            expected: expected.to_string(),
            got,
        });
    }
    Ok(())
}

fn parse_interactions_csv(path: &Path) -> Result<InteractionTable> {
    let mut rdr = csv_reader(path)?;
    let mut rec = csv::ByteRecord::new();
    let mut builder = InteractionBuilder::new();
    let mut saw_header = false;
    while rdr.read_byte_record(&mut rec).map_err(|e| Error::Csv {
        path: path.to_path_buf(),
        source: e,
    })? {
        if !saw_header {
            check_header(path, &rec, INTERACTIONS_HEADER)?;
            saw_header = true;
            continue;
        }
        if rec.len() != 3 {
            builder.stats.rows += 1;
            builder.stats.malformed += 1;
            continue;
        }
        builder.push_bytes(&rec[0], &rec[1], &rec[2]);
    }
    if !saw_header {
        return Err(Error::BadHeader {
            path: path.to_path_buf(),
            expected: INTERACTIONS_HEADER.to_string(),
            got: String::new(),
        });
    }
    Ok(builder.finish())
}

fn parse_interactions_jsonl(path: &Path) -> Result<InteractionTable> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = std::io::BufReader::new(file);
    let mut builder = InteractionBuilder::new();
    for line in reader.lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<JsonInteraction>(&line) {
            Ok(row) => builder.push(&row.user_id, &row.post_id, row.timestamp),
            Err(_) => {
                builder.stats.rows += 1;
                builder.stats.malformed += 1;
            }
        }
    }
    Ok(builder.finish())
}

/// Accumulates post -> page rows; conflicting reassignment is fatal.
pub struct PostMetaBuilder {
    posts: Interner,
    pages: Interner,
    page_of_post: Vec<u32>,
    stats: PostStats,
}

impl Default for PostMetaBuilder {
    fn default() -> Self {
        Self::new()
    }
}

impl PostMetaBuilder {
    pub fn new() -> Self {
        PostMetaBuilder {
            posts: Interner::default(),
            pages: Interner::default(),
            page_of_post: Vec::new(),
            stats: PostStats::default(),
        }
    }

    pub fn push(&mut self, post: &str, page: &str) -> Result<()> {
        self.stats.rows += 1;
        if !valid_token(post.as_bytes()) || !valid_token(page.as_bytes()) {
            self.stats.malformed += 1;
            return Ok(());
        }
        let pg = self.pages.intern(page);
        if let Some(&existing) = self.posts.lookup.get(post) {
            let prev = self.page_of_post[existing as usize];
            if prev == pg {
                self.stats.duplicates += 1;
                return Ok(());
            }
            return Err(Error::PageConflict {
                post: post.to_string(),
                a: self.pages.tokens[prev as usize].clone(),
                b: page.to_string(),
            });
        }
        self.posts.intern(post);
        self.page_of_post.push(pg);
        Ok(())
    }

    pub fn finish(mut self) -> PostTable {
        self.stats.kept = self.posts.tokens.len() as u64;
        PostTable {
            posts: self.posts.tokens,
            pages: self.pages.tokens,
            page_of_post: self.page_of_post,
            stats: self.stats,
        }
    }
}

/// Parsed post -> page mapping with provisional ids.
pub struct PostTable {
    posts: Vec<String>,
    pages: Vec<String>,
    page_of_post: Vec<u32>,
    pub stats: PostStats,
}

impl PostTable {
    pub fn n_posts(&self) -> usize {
        self.posts.len()
    }

    pub fn n_pages(&self) -> usize {
        self.pages.len()
    }
}

pub fn parse_post_meta(path: &Path) -> Result<PostTable> {
    let mut rdr = csv_reader(path)?;
    let mut rec = csv::ByteRecord::new();
    let mut builder = PostMetaBuilder::new();
    let mut saw_header = false;
    while rdr.read_byte_record(&mut rec).map_err(|e| Error::Csv {
        path: path.to_path_buf(),
        source: e,
    })? {
        if !saw_header {
            check_header(path, &rec, POSTS_HEADER)?;
            saw_header = true;
            continue;
        }
        if rec.len() != 2 {
            builder.stats.rows += 1;
            builder.stats.malformed += 1;
            continue;
        }
        let post = std::str::from_utf8(&rec[0]).unwrap_or("");
        let page = std::str::from_utf8(&rec[1]).unwrap_or("");
        builder.push(post, page)?;
    }
    if !saw_header {
        return Err(Error::BadHeader {
            path: path.to_path_buf(),
            expected: POSTS_HEADER.to_string(),
            got: String::new(),
        });
    }
    Ok(builder.finish())
}

/// Accumulates topic mixture rows for a fixed column count.
pub struct TopicBuilder {
    n_topics: usize,
    source: PathBuf,
    posts: Vec<String>,
    seen: HashMap<String, ()>,
    data: Vec<f64>,
    stats: TopicStats,
}

impl TopicBuilder {
    pub fn new(n_topics: usize) -> Self {
        TopicBuilder {
            n_topics,
            source: PathBuf::from("<memory>"),
            posts: Vec::new(),
            seen: HashMap::new(),
            data: Vec::new(),
            stats: TopicStats::default(),
        }
    }

    /// Adds one mixture row. A wrong column count is fatal; rows failing
    /// validation (bad token, out-of-range value or row sum) are skipped and
    /// counted. Valid rows are renormalized to sum 1.
    pub fn push(&mut self, post: &str, proportions: &[f64]) -> Result<()> {
        self.stats.rows += 1;
        if proportions.len() != self.n_topics {
            return Err(Error::TopicColumnMismatch {
                path: self.source.clone(),
                line: self.stats.rows + 1,
                expected: self.n_topics,
                got: proportions.len(),
            });
        }
        if !valid_token(post.as_bytes()) {
            self.stats.malformed += 1;
            return Ok(());
        }
        if proportions.iter().any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0) {
            self.stats.malformed += 1;
            return Ok(());
        }
        let sum: f64 = proportions.iter().sum();
        if (sum - 1.0).abs() > MIXTURE_SUM_TOLERANCE {
            self.stats.badsum += 1;
            return Ok(());
        }
        if self.seen.contains_key(post) {
            self.stats.duplicates += 1;
            return Ok(());
        }
        self.seen.insert(post.to_string(), ());
        self.posts.push(post.to_string());
        self.data.extend(proportions.iter().map(|v| v / sum));
        Ok(())
    }

    pub fn finish(mut self, topic_names: Vec<String>) -> TopicTable {
        self.stats.kept = self.posts.len() as u64;
        TopicTable {
            n_topics: self.n_topics,
            topic_names,
            posts: self.posts,
            data: self.data,
            stats: self.stats,
        }
    }
}

/// Parsed topic mixtures with provisional (file-order) rows.
#[derive(Debug)]
pub struct TopicTable {
    pub n_topics: usize,
    pub topic_names: Vec<String>,
    posts: Vec<String>,
    data: Vec<f64>,
    pub stats: TopicStats,
}

impl TopicTable {
    pub fn n_rows(&self) -> usize {
        self.posts.len()
    }
}

pub fn parse_topic_mixtures(path: &Path) -> Result<TopicTable> {
    let mut rdr = csv_reader(path)?;
    let mut rec = csv::ByteRecord::new();
    let mut builder: Option<TopicBuilder> = None;
    let mut names: Vec<String> = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    while rdr.read_byte_record(&mut rec).map_err(|e| Error::Csv {
        path: path.to_path_buf(),
        source: e,
    })? {
        let b = match builder.as_mut() {
            Some(b) => b,
            None => {
                names = validate_topic_header(path, &rec)?;
                let mut b = TopicBuilder::new(names.len());
                b.source = path.to_path_buf();
                builder = Some(b);
                continue;
            }
        };
        if rec.len() != b.n_topics + 1 {
            return Err(Error::TopicColumnMismatch {
                path: path.to_path_buf(),
                line: rec.position().map(|p| p.line()).unwrap_or(0),
                expected: b.n_topics,
                got: rec.len().saturating_sub(1),
            });
        }
        let post = std::str::from_utf8(&rec[0]).unwrap_or("");
        values.clear();
        let mut ok = true;
        for i in 1..rec.len() {
            match std::str::from_utf8(&rec[i]).ok().and_then(|s| s.parse::<f64>().ok()) {
                Some(v) => values.push(v),
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            b.stats.rows += 1;
            b.stats.malformed += 1;
            continue;
        }
        b.push(post, &values)?;
    }
    let builder = builder.ok_or_else(|| Error::BadHeader {
        path: path.to_path_buf(),
        expected: "post_id,t0,...,t{K-1}".to_string(),
        got: String::new(),
    })?;
    Ok(builder.finish(names))
}

fn validate_topic_header(path: &Path, rec: &csv::ByteRecord) -> Result<Vec<String>> {
    let bad = |got: String| Error::BadHeader {
        path: path.to_path_buf(),
        expected: "post_id,t0,...,t{K-1}".to_string(),
        got,
    };
    let fields: Vec<String> = rec
        .iter()
        .map(|f| String::from_utf8_lossy(f).into_owned())
        .collect();
    let joined = fields.join(",");
    if fields.len() < 2 || fields[0] != "post_id" {
        return Err(bad(joined));
    }
    let mut names = Vec::with_capacity(fields.len() - 1);
    for (i, name) in fields[1..].iter().enumerate() {
        let mut expected = String::new();
        let _ = write!(expected, "t{i}");
        if *name != expected {
            return Err(bad(joined));
        }
        names.push(name.clone());
    }
    if names.len() > u16::MAX as usize {
        return Err(Error::TooManyTopics { got: names.len() });
    }
    Ok(names)
}

/// Validated topic mixture matrix, rows ordered by post index.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicMixtures {
    pub n_topics: usize,
    /// Maps post index to its row, if the post has a mixture.
    pub row_of_post: Vec<Option<u32>>,
    data: Vec<f64>,
}

impl TopicMixtures {
    pub fn n_rows(&self) -> usize {
        if self.n_topics == 0 {
            0
        } else {
            self.data.len() / self.n_topics
        }
    }

    pub fn row(&self, r: u32) -> &[f64] {
        let k = self.n_topics;
        &self.data[r as usize * k..(r as usize + 1) * k]
    }

    pub fn row_for_post(&self, post: u32) -> Option<&[f64]> {
        self.row_of_post
            .get(post as usize)
            .copied()
            .flatten()
            .map(|r| self.row(r))
    }
}

/// A fully indexed dataset ready for incidence building.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub index: IdIndex,
    /// Sorted by (user, post); (user, post) pairs unique.
    pub interactions: Vec<Interaction>,
    /// Total over indexed posts.
    pub page_of_post: Vec<u32>,
    pub mixtures: Option<TopicMixtures>,
    pub stats: IngestStats,
}

impl Dataset {
    pub fn n_users(&self) -> usize {
        self.index.users.len()
    }

    pub fn n_posts(&self) -> usize {
        self.index.posts.len()
    }

    pub fn n_pages(&self) -> usize {
        self.index.pages.len()
    }

    pub fn n_topics(&self) -> Option<usize> {
        self.mixtures.as_ref().map(|m| m.n_topics)
    }

    pub fn load(
        interactions: &Path,
        posts: &Path,
        topics: Option<&Path>,
        format: Format,
    ) -> Result<Dataset> {
        let inter = parse_interactions(interactions, format)?;
        let post_table = parse_post_meta(posts)?;
        let topic_table = topics.map(parse_topic_mixtures).transpose()?;
        Dataset::from_tables(inter, post_table, topic_table)
    }

    /// Resolves provisional ids to sorted-token indices and assembles the
    /// dataset. Every interacted post must appear in the post table.
    pub fn from_tables(
        inter: InteractionTable,
        posts: PostTable,
        topics: Option<TopicTable>,
    ) -> Result<Dataset> {
        let (user_index, user_remap) = TokenIndex::from_distinct(inter.users);
        let (post_index, post_remap) = TokenIndex::from_distinct(posts.posts);
        let (page_index, page_remap) = TokenIndex::from_distinct(posts.pages);

        let mut page_of_post = vec![0u32; post_index.len()];
        for (prov, &pg) in posts.page_of_post.iter().enumerate() {
            page_of_post[post_remap[prov] as usize] = page_remap[pg as usize];
        }

        // Interaction post tokens were interned independently of the post
        // table; translate through the token itself.
        let mut inter_post_remap = Vec::with_capacity(inter.posts.len());
        for tok in &inter.posts {
            match post_index.get(tok) {
                Some(idx) => inter_post_remap.push(idx),
                None => {
                    return Err(Error::UnknownPost { post: tok.clone() });
                }
            }
        }

        let mut interactions: Vec<Interaction> = inter
            .rows
            .into_iter()
            .map(|(u, p, ts)| Interaction {
                user: user_remap[u as usize],
                post: inter_post_remap[p as usize],
                timestamp: ts,
            })
            .collect();
        interactions.sort_unstable_by_key(|r| (r.user, r.post));

        let mut stats = IngestStats {
            interactions: inter.stats,
            posts: posts.stats,
            topics: None,
            posts_without_mixture: 0,
        };

        let (mixtures, topic_names) = match topics {
            None => (None, Vec::new()),
            Some(table) => {
                let mut tstats = table.stats;
                let k = table.n_topics;
                let mut placed: Vec<(u32, u32)> = Vec::with_capacity(table.posts.len());
                for (row, tok) in table.posts.iter().enumerate() {
                    match post_index.get(tok) {
                        Some(post) => placed.push((post, row as u32)),
                        None => tstats.unknown_posts += 1,
                    }
                }
                placed.sort_unstable();
                let mut row_of_post = vec![None; post_index.len()];
                let mut data = Vec::with_capacity(placed.len() * k);
                for (new_row, &(post, old_row)) in placed.iter().enumerate() {
                    row_of_post[post as usize] = Some(new_row as u32);
                    let start = old_row as usize * k;
                    data.extend_from_slice(&table.data[start..start + k]);
                }
                stats.posts_without_mixture =
                    (post_index.len() - placed.len()) as u64;
                stats.topics = Some(tstats);
                (
                    Some(TopicMixtures {
                        n_topics: k,
                        row_of_post,
                        data,
                    }),
                    table.topic_names,
                )
            }
        };

        Ok(Dataset {
            index: IdIndex {
                users: user_index,
                posts: post_index,
                pages: page_index,
                topics: topic_names,
            },
            interactions,
            page_of_post,
            mixtures,
            stats,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_file(dir: &Path, name: &str, content: &str) -> PathBuf {
        let path = dir.join(name);
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(content.as_bytes()).unwrap();
        path
    }

    fn basic_posts() -> PostTable {
        let mut b = PostMetaBuilder::new();
        b.push("p1", "A").unwrap();
        b.push("p2", "A").unwrap();
        b.push("p3", "B").unwrap();
        b.finish()
    }

    #[test]
    fn dedup_counts_and_keeps_min_timestamp() {
        let mut b = InteractionBuilder::new();
        b.push("u1", "p1", 50);
        b.push("u1", "p1", 10);
        b.push("u1", "p2", 7);
        let t = b.finish();
        assert_eq!(t.stats.rows, 3);
        assert_eq!(t.stats.kept, 2);
        assert_eq!(t.stats.duplicates, 1);
        let ds = Dataset::from_tables(t, basic_posts(), None).unwrap();
        let rec = ds
            .interactions
            .iter()
            .find(|r| ds.index.posts.token(r.post) == "p1")
            .unwrap();
        assert_eq!(rec.timestamp, 10);
    }

    #[test]
    fn malformed_rows_counted() {
        let mut b = InteractionBuilder::new();
        b.push("u1", "p1", -5);
        b.push("u 1", "p1", 5);
        b.push("", "p1", 5);
        b.push("u1", "p1", 5);
        let t = b.finish();
        assert_eq!(t.stats.rows, 4);
        assert_eq!(t.stats.malformed, 3);
        assert_eq!(t.stats.kept, 1);
        assert_eq!(t.stats.kept + t.stats.duplicates + t.stats.malformed, t.stats.rows);
    }

    #[test]
    fn csv_header_enforced() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(dir.path(), "x.csv", "user,post,ts\nu1,p1,5\n");
        let err = parse_interactions(&path, Format::Csv).unwrap_err();
        assert!(matches!(err, Error::BadHeader { .. }));
    }

    #[test]
    fn csv_and_jsonl_agree() {
        let dir = tempfile::tempdir().unwrap();
        let csv = write_file(
            dir.path(),
            "i.csv",
            "user_id,post_id,timestamp\nu2,p1,5\nu1,p2,9\nu1,p2,9\nbad id,p1,3\n",
        );
        let jsonl = write_file(
            dir.path(),
            "i.jsonl",
            concat!(
                "{\"user_id\":\"u2\",\"post_id\":\"p1\",\"timestamp\":5}\n",
                "{\"user_id\":\"u1\",\"post_id\":\"p2\",\"timestamp\":9}\n",
                "{\"user_id\":\"u1\",\"post_id\":\"p2\",\"timestamp\":9}\n",
                "{\"user_id\":\"bad id\",\"post_id\":\"p1\",\"timestamp\":3}\n",
            ),
        );
        let a = parse_interactions(&csv, Format::Csv).unwrap();
        let b = parse_interactions(&jsonl, Format::Jsonl).unwrap();
        assert_eq!(a.stats, b.stats);
        let da = Dataset::from_tables(a, basic_posts(), None).unwrap();
        let db = Dataset::from_tables(b, basic_posts(), None).unwrap();
        assert_eq!(da, db);
    }

    #[test]
    fn empty_file_with_header_is_ok() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(dir.path(), "e.csv", "user_id,post_id,timestamp\n");
        let t = parse_interactions(&path, Format::Csv).unwrap();
        assert_eq!(t.stats.rows, 0);
        assert_eq!(t.n_rows(), 0);
    }

    #[test]
    fn page_conflict_is_fatal_identical_duplicate_is_not() {
        let mut b = PostMetaBuilder::new();
        b.push("p1", "A").unwrap();
        b.push("p1", "A").unwrap();
        let err = b.push("p1", "B").unwrap_err();
        assert!(matches!(err, Error::PageConflict { .. }));

        let mut b = PostMetaBuilder::new();
        b.push("p1", "A").unwrap();
        b.push("p1", "A").unwrap();
        let t = b.finish();
        assert_eq!(t.stats.kept, 1);
        assert_eq!(t.stats.duplicates, 1);
        assert_eq!(t.n_pages(), 1);
    }

    #[test]
    fn topic_rows_validated_and_renormalized() {
        let mut b = TopicBuilder::new(2);
        b.push("p1", &[0.7, 0.3]).unwrap();
        b.push("p2", &[0.5, 0.5000004]).unwrap();
        b.push("p3", &[0.9, 0.2]).unwrap();
        let t = b.finish(vec!["t0".into(), "t1".into()]);
        assert_eq!(t.stats.kept, 2);
        assert_eq!(t.stats.badsum, 1);
        let sum: f64 = t.data[2..4].iter().sum();
        assert!((sum - 1.0).abs() < 1e-15);
    }

    #[test]
    fn topic_column_mismatch_is_fatal() {
        let mut b = TopicBuilder::new(2);
        let err = b.push("p1", &[0.5, 0.25, 0.25]).unwrap_err();
        assert!(matches!(err, Error::TopicColumnMismatch { .. }));
    }

    #[test]
    fn topic_header_must_match_pattern() {
        let dir = tempfile::tempdir().unwrap();
        let bad = write_file(dir.path(), "t.csv", "post_id,a,b\np1,0.5,0.5\n");
        assert!(matches!(
            parse_topic_mixtures(&bad).unwrap_err(),
            Error::BadHeader { .. }
        ));
        let good = write_file(dir.path(), "t2.csv", "post_id,t0,t1\np1,0.5,0.5\n");
        let t = parse_topic_mixtures(&good).unwrap();
        assert_eq!(t.n_topics, 2);
        assert_eq!(t.stats.kept, 1);
    }

    #[test]
    fn unknown_interaction_post_is_fatal() {
        let mut b = InteractionBuilder::new();
        b.push("u1", "nope", 1);
        let err = Dataset::from_tables(b.finish(), basic_posts(), None).unwrap_err();
        assert!(matches!(err, Error::UnknownPost { .. }));
    }

    #[test]
    fn unknown_topic_post_is_counted_not_fatal() {
        let mut ib = InteractionBuilder::new();
        ib.push("u1", "p1", 1);
        let mut tb = TopicBuilder::new(2);
        tb.push("p1", &[0.5, 0.5]).unwrap();
        tb.push("zzz", &[0.5, 0.5]).unwrap();
        let ds = Dataset::from_tables(
            ib.finish(),
            basic_posts(),
            Some(tb.finish(vec!["t0".into(), "t1".into()])),
        )
        .unwrap();
        let ts = ds.stats.topics.unwrap();
        assert_eq!(ts.unknown_posts, 1);
        assert_eq!(ds.stats.posts_without_mixture, 2);
    }

    #[test]
    fn indices_follow_sorted_token_order() {
        let mut b = InteractionBuilder::new();
        b.push("zeta", "p2", 1);
        b.push("alpha", "p1", 2);
        let ds = Dataset::from_tables(b.finish(), basic_posts(), None).unwrap();
        assert_eq!(ds.index.users.token(0), "alpha");
        assert_eq!(ds.index.users.token(1), "zeta");
        assert_eq!(ds.index.users.get("zeta"), Some(1));
    }

    #[test]
    fn ingestion_is_order_independent() {
        let rows = [
            ("u3", "p1", 11),
            ("u1", "p2", 22),
            ("u1", "p1", 33),
            ("u2", "p3", 44),
            ("u1", "p2", 8),
        ];
        let mut forward = InteractionBuilder::new();
        for (u, p, t) in rows {
            forward.push(u, p, t);
        }
        let mut backward = InteractionBuilder::new();
        for (u, p, t) in rows.iter().rev() {
            backward.push(u, p, *t);
        }
        let a = Dataset::from_tables(forward.finish(), basic_posts(), None).unwrap();
        let b = Dataset::from_tables(backward.finish(), basic_posts(), None).unwrap();
        assert_eq!(a, b);
    }
}
