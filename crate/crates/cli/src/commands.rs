use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use rerank_core::eval::{evaluate, generate_manifold, MetricReport};
use rerank_core::{baseline_rankings, par, rerank, FeatureSet, RunReport};

use crate::error::{CliError, EXIT_NONCONVERGED};
use crate::features::{load_features, save_raw, FeatureFormat, RawFeatures};
use crate::output::write_atomic;
use crate::run::{load_run, save_run};
use crate::settings::{resolve, ResolvedConfig};
use crate::truth::{load_truth, save_truth};

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "LPMT_THREADS";

/// Apply `LPMT_THREADS` if set.
pub fn configure_threads_from_env() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got `{raw}`")))?;
    if !par::configure_threads(n) {
        info!("{THREADS_ENV}={n} ignored: thread pool already fixed");
    }
    Ok(())
}

/// Query ids, one per line; `#` comments and blank lines skipped.
pub fn load_queries(path: &Path, features: &FeatureSet) -> Result<Vec<usize>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let id = line.trim();
        if id.is_empty() || id.starts_with('#') {
            continue;
        }
        let idx = features.index_of(id).ok_or_else(|| {
            CliError::Usage(format!("{}:{}: unknown query id `{id}`", path.display(), i + 1))
        })?;
        out.push(idx);
    }
    Ok(out)
}

pub struct RerankArgs<'a> {
    pub features: &'a Path,
    pub queries: Option<&'a Path>,
    pub out: &'a Path,
    pub config: Option<&'a Path>,
    pub baseline: bool,
    pub flags: Vec<(&'static str, String)>,
}

pub fn sidecar_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".report");
    out.with_file_name(name)
}

fn render_report(report: &RunReport, resolved: &ResolvedConfig, seconds: f64) -> String {
    let status = if report.has_nonconvergence() { "nonconverged" } else { "ok" };
    let fmt_list = |v: &[f64]| v.iter().map(|x| format!("{x:.6}")).collect::<Vec<_>>().join(",");
    let mut s = format!(
        "status={status}\nsubproblems={}\ndiffusion_iterations={}\ndiffusion_unconverged={}\n\
         sinkhorn_solves={}\nsinkhorn_nonconverged={}\nsinkhorn_log_domain={}\n\
         sinkhorn_max_marginal_error={:e}\nepsilon={}\nseconds={seconds:.3}\n",
        report.subproblems,
        report.diffusion_iterations,
        report.diffusion_unconverged,
        report.sinkhorn.solves,
        report.sinkhorn.non_converged,
        report.sinkhorn.log_domain,
        report.sinkhorn.max_marginal_error,
        fmt_list(&report.epsilon),
    );
    if let Some(beta) = report.beta.first() {
        s.push_str(&format!("beta={}\n", fmt_list(beta)));
    }
    for (k, v) in resolved.config.to_key_values() {
        s.push_str(&format!("config.{k}={v}\n"));
    }
    s
}

/// Returns the process exit code.
pub fn rerank_command(args: RerankArgs<'_>) -> Result<i32, CliError> {
    let resolved = resolve(args.config, &args.flags)?;
    eprint!("{}", resolved.banner());
    let features = load_features(args.features)?;
    let queries = match args.queries {
        Some(p) => load_queries(p, &features)?,
        None => (0..features.n()).collect(),
    };
    let started = Instant::now();
    if args.baseline {
        let rankings = baseline_rankings(&features, &queries, &resolved.config)?;
        save_run(args.out, &rankings, &features)?;
        return Ok(0);
    }
    let out = rerank(&features, &queries, &resolved.config)?;
    save_run(args.out, &out.rankings, &features)?;
    let seconds = started.elapsed().as_secs_f64();
    let text = render_report(&out.report, &resolved, seconds);
    write_atomic(&sidecar_path(args.out), |w| w.write_all(text.as_bytes()))?;
    if out.report.has_nonconvergence() {
        eprintln!(
            "warning: {} transport solves hit the iteration cap; see {}",
            out.report.sinkhorn.non_converged,
            sidecar_path(args.out).display()
        );
        return Ok(EXIT_NONCONVERGED);
    }
    Ok(0)
}

pub fn format_metrics(report: &MetricReport) -> String {
    format!(
        "metric   value\n\
         mAP      {:.4}\n\
         R@1      {:.4}\n\
         queries  {}\n\
         skipped  {}\n\
         mAP={:.4}\nR@1={:.4}\nqueries={}\nskipped={}\n",
        report.map,
        report.recall_at_1,
        report.per_query.len(),
        report.skipped.len(),
        report.map,
        report.recall_at_1,
        report.per_query.len(),
        report.skipped.len(),
    )
}

/// Score a run. The gallery is the id set of `features` when given,
/// otherwise every id mentioned in the truth file.
pub fn eval_command(run: &Path, truth: &Path, features: Option<&Path>) -> Result<MetricReport, CliError> {
    let truth_data = load_truth(truth)?;
    let entries = load_run(run)?;
    let owned_ids;
    let gallery: BTreeSet<&str> = match features {
        Some(p) => {
            owned_ids = load_features(p)?.ids().to_vec();
            owned_ids.iter().map(String::as_str).collect()
        }
        None => truth_data
            .iter()
            .flat_map(|(q, t)| std::iter::once(q).chain(t.relevant.iter().chain(&t.junk).map(String::as_str)))
            .collect(),
    };
    truth_data.check_ids(&gallery)?;
    for e in &entries {
        if let Some(bad) = std::iter::once(&e.query).chain(&e.gallery).find(|id| !gallery.contains(id.as_str())) {
            return Err(CliError::Usage(format!(
                "{}: query `{}` references unknown id `{bad}`",
                run.display(),
                e.query
            )));
        }
    }
    let runs: Vec<(String, Vec<String>)> = entries.into_iter().map(|e| (e.query, e.gallery)).collect();
    Ok(evaluate(&runs, &truth_data))
}

pub struct GenArgs<'a> {
    pub out: &'a Path,
    pub truth: &'a Path,
    pub seed: u64,
    pub per_cluster: usize,
    pub clusters: usize,
    pub noise: f64,
    pub format: FeatureFormat,
}

pub fn gen_command(args: GenArgs<'_>) -> Result<(), CliError> {
    let m = generate_manifold(args.seed, args.per_cluster, args.clusters, args.noise)?;
    save_raw(args.out, &RawFeatures::from_feature_set(&m.features), args.format)?;
    save_truth(args.truth, &m.truth)?;
    Ok(())
}

pub struct BenchArgs<'a> {
    pub features: &'a Path,
    pub queries: Option<&'a Path>,
    pub config: Option<&'a Path>,
    pub repeat: usize,
    pub flags: Vec<(&'static str, String)>,
}

/// Time the baseline and the full pipeline; returns `key=value` lines.
pub fn bench_command(args: BenchArgs<'_>) -> Result<String, CliError> {
    let resolved = resolve(args.config, &args.flags)?;
    let features = load_features(args.features)?;
    let queries = match args.queries {
        Some(p) => load_queries(p, &features)?,
        None => (0..features.n()).collect(),
    };
    let repeat = args.repeat.max(1);
    let mut timings: HashMap<&str, Vec<f64>> = HashMap::new();
    for _ in 0..repeat {
        let t = Instant::now();
        baseline_rankings(&features, &queries, &resolved.config)?;
        timings.entry("baseline").or_default().push(t.elapsed().as_secs_f64());
        let t = Instant::now();
        rerank(&features, &queries, &resolved.config)?;
        timings.entry("rerank").or_default().push(t.elapsed().as_secs_f64());
    }
    let mut s = format!(
        "n={}\nd={}\nqueries={}\nthreads={}\nrepeat={repeat}\n",
        features.n(),
        features.d(),
        queries.len(),
        par::current_threads()
    );
    for key in ["baseline", "rerank"] {
        let mut v = timings.remove(key).unwrap_or_default();
        v.sort_by(f64::total_cmp);
        s.push_str(&format!("{key}_min_seconds={:.4}\n", v[0]));
        s.push_str(&format!("{key}_median_seconds={:.4}\n", v[v.len() / 2]));
    }
    Ok(s)
}
