use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use selex::bipartite::{build_structures, BipartiteStructures};
use selex::ingest::{Dataset, Format};
use selex::metrics::{compute_profiles, write_profiles_csv, UserProfile};
use selex::report::{
    binned_average, density_grid, run_pipeline, write_curve_csv, write_density_csv, AxisSpec,
    Binning, PipelineOptions, DEFAULT_CURVE_BINS, DEFAULT_GINI_AXIS_BINS,
};
use selex::synth::{ActivityLaw, SynthConfig};
use selex::taxonomy::{
    classify_population, write_taxonomy_csv, write_taxonomy_summary, TaxonomyThresholds,
};

#[derive(Parser)]
#[command(
    name = "selex",
    version,
    about = "Concentration profiles and selective-exposure classification of like logs"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// Like log: user_id,post_id,timestamp
    #[arg(long, global = true, value_name = "FILE")]
    interactions_file: Option<PathBuf>,

    /// Post metadata: post_id,page_id
    #[arg(long, global = true, value_name = "FILE")]
    posts_file: Option<PathBuf>,

    /// Optional topic mixtures: post_id,t0,...
    #[arg(long, global = true, value_name = "FILE")]
    topics_file: Option<PathBuf>,

    /// Directory outputs are written into
    #[arg(long, global = true, value_name = "DIR")]
    out_dir: Option<PathBuf>,

    /// Worker threads (default: one per core)
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    /// Explicit classification thresholds as t_topics,t_pages
    #[arg(long, global = true, value_name = "T,P")]
    thresholds: Option<String>,

    /// Bin count for the binned curves and the activity/lifetime grid axes
    #[arg(long, global = true, value_name = "N")]
    bins: Option<usize>,

    /// Bin count for the Gini grid axes
    #[arg(long, global = true, value_name = "N")]
    grid_bins: Option<usize>,

    /// Seed for synthetic data
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Interaction log encoding
    #[arg(long, global = true, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Jsonl,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Format {
        match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Jsonl => Format::Jsonl,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Parse the input files and report ingest statistics
    Ingest {
        /// Also write the user/post incidence to a binary cache file
        #[arg(long, value_name = "FILE")]
        cache: Option<PathBuf>,
    },
    /// Compute per-user concentration profiles
    Profile,
    /// Label users by region of the concentration plane
    Classify,
    /// Binned curves of page and topic breadth against activity and lifetime
    Curves,
    /// Two-dimensional occupancy grids over the profile coordinates
    Density,
    /// Generate a synthetic dataset with known concentration knobs
    Synth {
        #[arg(long, value_name = "N")]
        users: Option<u64>,
        #[arg(long, value_name = "N")]
        pages: Option<u64>,
        #[arg(long, value_name = "N")]
        posts: Option<u64>,
        /// Number of topics per mixture
        #[arg(long, value_name = "N")]
        topics_n: Option<u64>,
        /// Probability a like goes to the user's home page
        #[arg(long, value_name = "P")]
        loyalty: Option<f64>,
        /// Concentration of the topic mixture sampler
        #[arg(long, value_name = "A")]
        alpha: Option<f64>,
        /// Activity law: const:K or powerlaw:EXP:MIN:MAX
        #[arg(long, value_name = "LAW")]
        activity: Option<String>,
        #[arg(long, value_name = "DAYS")]
        horizon_days: Option<f64>,
        /// key=value config file; explicit flags override it
        #[arg(long, value_name = "FILE")]
        config: Option<PathBuf>,
    },
    /// Full pipeline: profiles, classification, curves, grids and a manifest
    Run,
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    if let Some(t) = cli.global.threads {
        if t == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .context("thread pool setup failed")?;
    }
    match &cli.command {
        Command::Ingest { cache } => cmd_ingest(&cli.global, cache.as_deref()),
        Command::Profile => cmd_profile(&cli.global),
        Command::Classify => cmd_classify(&cli.global),
        Command::Curves => cmd_curves(&cli.global),
        Command::Density => cmd_density(&cli.global),
        Command::Synth {
            users,
            pages,
            posts,
            topics_n,
            loyalty,
            alpha,
            activity,
            horizon_days,
            config,
        } => cmd_synth(
            &cli.global,
            SynthOverrides {
                users: *users,
                pages: *pages,
                posts: *posts,
                topics_n: *topics_n,
                loyalty: *loyalty,
                alpha: *alpha,
                activity: activity.clone(),
                horizon_days: *horizon_days,
                config: config.clone(),
            },
        ),
        Command::Run => cmd_run(&cli.global),
    }
}

fn require<T: Clone>(value: &Option<T>, flag: &str) -> anyhow::Result<T> {
    value.clone().with_context(|| format!("{flag} is required for this command"))
}

fn parse_thresholds(raw: &str) -> anyhow::Result<(f64, f64)> {
    let (t, p) = raw
        .split_once(',')
        .with_context(|| format!("--thresholds expects t_topics,t_pages, got {raw:?}"))?;
    let t: f64 = t.trim().parse().context("bad t_topics")?;
    let p: f64 = p.trim().parse().context("bad t_pages")?;
    Ok((t, p))
}

fn load_dataset(g: &GlobalArgs) -> anyhow::Result<Dataset> {
    let interactions = require(&g.interactions_file, "--interactions-file")?;
    let posts = require(&g.posts_file, "--posts-file")?;
    let ds = Dataset::load(
        &interactions,
        &posts,
        g.topics_file.as_deref(),
        g.format.into(),
    )?;
    Ok(ds)
}

fn load_profiles(g: &GlobalArgs) -> anyhow::Result<(Dataset, BipartiteStructures, Vec<UserProfile>)> {
    let ds = load_dataset(g)?;
    let bip = build_structures(&ds)?;
    let profiles = compute_profiles(&ds, &bip)?;
    Ok((ds, bip, profiles))
}

fn out_dir(g: &GlobalArgs) -> anyhow::Result<PathBuf> {
    let dir = require(&g.out_dir, "--out-dir")?;
    std::fs::create_dir_all(&dir)
        .with_context(|| format!("cannot create {}", dir.display()))?;
    Ok(dir)
}

fn cmd_ingest(g: &GlobalArgs, cache: Option<&std::path::Path>) -> anyhow::Result<()> {
    let ds = load_dataset(g)?;
    if let Some(path) = cache {
        let bip = build_structures(&ds)?;
        bip.incidence.write_cache(path)?;
    }
    println!("{}", serde_json::to_string_pretty(&ds.stats)?);
    eprintln!(
        "{} users, {} posts, {} pages{}",
        ds.n_users(),
        ds.n_posts(),
        ds.n_pages(),
        ds.n_topics()
            .map_or(String::new(), |k| format!(", {k} topics"))
    );
    Ok(())
}

fn cmd_profile(g: &GlobalArgs) -> anyhow::Result<()> {
    let dir = out_dir(g)?;
    let (ds, _, profiles) = load_profiles(g)?;
    let path = dir.join("profiles.csv");
    write_profiles_csv(&path, &profiles, &ds.index.users)?;
    println!("{}: {} users", path.display(), profiles.len());
    Ok(())
}

fn cmd_classify(g: &GlobalArgs) -> anyhow::Result<()> {
    let dir = out_dir(g)?;
    let (ds, _, profiles) = load_profiles(g)?;
    let thresholds = g
        .thresholds
        .as_deref()
        .map(parse_thresholds)
        .transpose()?
        .map(|(t, p)| TaxonomyThresholds::explicit(t, p))
        .transpose()?;
    let classification = classify_population(&profiles, thresholds)?;
    write_taxonomy_csv(&classification, ds.index.users.tokens(), &dir.join("taxonomy.csv"))?;
    write_taxonomy_summary(&classification, &dir.join("taxonomy_summary.json"))?;
    let c = &classification.counts;
    println!(
        "thresholds t_topics={:.6} t_pages={:.6}; multi_topic_se={} single_topic_se={} \
         exposure_by_interest={} low_activity={} unscored={}",
        classification.thresholds.t_topics,
        classification.thresholds.t_pages,
        c.multi_topic_se,
        c.single_topic_se,
        c.exposure_by_interest,
        c.low_activity,
        classification.unscored,
    );
    Ok(())
}

fn cmd_curves(g: &GlobalArgs) -> anyhow::Result<()> {
    let dir = out_dir(g)?;
    let (_, _, profiles) = load_profiles(g)?;
    let bins = g.bins.unwrap_or(DEFAULT_CURVE_BINS);
    let specs: [(&str, fn(&UserProfile) -> Option<(f64, f64)>); 4] = [
        ("curve_activity_pages.csv", |p| {
            Some((p.activity as f64, p.n_pages as f64))
        }),
        ("curve_activity_topics.csv", |p| {
            p.n_topics.map(|t| (p.activity as f64, t as f64))
        }),
        ("curve_lifetime_pages.csv", |p| {
            (p.lifetime_days > 0.0).then_some((p.lifetime_days, p.n_pages as f64))
        }),
        ("curve_lifetime_topics.csv", |p| match p.n_topics {
            Some(t) if p.lifetime_days > 0.0 => Some((p.lifetime_days, t as f64)),
            _ => None,
        }),
    ];
    let mut written = 0;
    for (name, select) in specs {
        let (x, y): (Vec<f64>, Vec<f64>) = profiles.iter().filter_map(select).unzip();
        if x.is_empty() {
            eprintln!("{name}: no data, skipped");
            continue;
        }
        let rows = binned_average(&x, &y, Binning::Log, bins)?;
        write_curve_csv(&dir.join(name), &rows)?;
        written += 1;
    }
    println!("wrote {written} curve files to {}", dir.display());
    Ok(())
}

fn cmd_density(g: &GlobalArgs) -> anyhow::Result<()> {
    let dir = out_dir(g)?;
    let (_, _, profiles) = load_profiles(g)?;
    let curve_bins = g.bins.unwrap_or(DEFAULT_CURVE_BINS);
    let gini_bins = g.grid_bins.unwrap_or(DEFAULT_GINI_AXIS_BINS);
    let gini_axis = AxisSpec::new(Binning::Linear, 0.0, 1.0, gini_bins)?;
    let specs: [(&str, fn(&UserProfile) -> Option<(f64, f64)>, bool); 5] = [
        (
            "density_activity_gini_topics.csv",
            |p| p.gini_topics.map(|gt| (p.activity as f64, gt)),
            true,
        ),
        (
            "density_lifetime_gini_topics.csv",
            |p| match p.gini_topics {
                Some(gt) if p.lifetime_days > 0.0 => Some((p.lifetime_days, gt)),
                _ => None,
            },
            true,
        ),
        (
            "density_activity_gini_pages_norm.csv",
            |p| Some((p.activity as f64, p.gini_pages_norm)),
            true,
        ),
        (
            "density_lifetime_gini_pages_norm.csv",
            |p| (p.lifetime_days > 0.0).then_some((p.lifetime_days, p.gini_pages_norm)),
            true,
        ),
        (
            "density_gini_pages_norm_gini_topics.csv",
            |p| p.gini_topics.map(|gt| (p.gini_pages_norm, gt)),
            false,
        ),
    ];
    let mut written = 0;
    for (name, select, log_x) in specs {
        let (x, y): (Vec<f64>, Vec<f64>) = profiles.iter().filter_map(select).unzip();
        if x.is_empty() {
            eprintln!("{name}: no data, skipped");
            continue;
        }
        let x_axis = if log_x {
            AxisSpec::from_data(Binning::Log, &x, curve_bins)?
        } else {
            gini_axis
        };
        let grid = density_grid(&x, &y, x_axis, gini_axis)?;
        write_density_csv(&dir.join(name), &grid)?;
        written += 1;
    }
    println!("wrote {written} density files to {}", dir.display());
    Ok(())
}

struct SynthOverrides {
    users: Option<u64>,
    pages: Option<u64>,
    posts: Option<u64>,
    topics_n: Option<u64>,
    loyalty: Option<f64>,
    alpha: Option<f64>,
    activity: Option<String>,
    horizon_days: Option<f64>,
    config: Option<PathBuf>,
}

fn cmd_synth(g: &GlobalArgs, ov: SynthOverrides) -> anyhow::Result<()> {
    let dir = out_dir(g)?;
    let mut cfg = match &ov.config {
        Some(path) => SynthConfig::from_kv_file(path)?,
        None => SynthConfig::default(),
    };
    if let Some(v) = ov.users {
        cfg.n_users = v;
    }
    if let Some(v) = ov.pages {
        cfg.n_pages = v;
    }
    if let Some(v) = ov.posts {
        cfg.n_posts = v;
    }
    if let Some(v) = ov.topics_n {
        cfg.n_topics = v;
    }
    if let Some(v) = ov.loyalty {
        cfg.loyalty = v;
    }
    if let Some(v) = ov.alpha {
        cfg.topic_concentration = v;
    }
    if let Some(law) = &ov.activity {
        cfg.activity = ActivityLaw::from_str(law)?;
    }
    if let Some(v) = ov.horizon_days {
        cfg.time_horizon_days = v;
    }
    if let Some(v) = g.seed {
        cfg.seed = v;
    }
    let data = selex::synth::generate(&cfg)?;
    let paths = data.write_dataset(&dir)?;
    println!(
        "wrote {} likes over {} posts to {}",
        data.likes.len(),
        cfg.n_posts,
        dir.display()
    );
    eprintln!(
        "files: {}, {}, {}",
        paths.interactions.display(),
        paths.posts.display(),
        paths.topics.display()
    );
    Ok(())
}

fn cmd_run(g: &GlobalArgs) -> anyhow::Result<()> {
    let interactions = require(&g.interactions_file, "--interactions-file")?;
    let posts = require(&g.posts_file, "--posts-file")?;
    let dir = require(&g.out_dir, "--out-dir")?;
    let options = PipelineOptions {
        format: g.format.into(),
        thresholds: g.thresholds.as_deref().map(parse_thresholds).transpose()?,
        curve_bins: g.bins.unwrap_or(DEFAULT_CURVE_BINS),
        gini_axis_bins: g.grid_bins.unwrap_or(DEFAULT_GINI_AXIS_BINS),
    };
    let outcome = run_pipeline(
        &interactions,
        &posts,
        g.topics_file.as_deref(),
        &dir,
        &options,
    )?;
    println!(
        "{} users profiled, {} outputs in {}",
        outcome.profiles.len(),
        outcome.manifest.outputs.len() + 1,
        dir.display()
    );
    Ok(())
}
