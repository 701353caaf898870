//! Dispatch of a [`RunConfig`] to its experiment and artifact writing.
//!
//! Every run directory holds `config.resolved.ini`, one or more CSV tables and
//! `summary.txt`. All CSVs carry the hash of the resolved configuration.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::config::{ExperimentKind, RunConfig};
use crate::error::{Error, Result};
use crate::ensembles::{sample_initial, sample_matrix, InitialLaw};
use crate::experiments::{
    run_aging, run_concentration, run_hopfield, run_moments_check, run_rayleigh, run_taylor_vs_mc, run_universality, MomentsCheckConfig,
    UniversalityReport,
};
use crate::io::{fmt_num, render_summary, trajectory_table, write_atomic, write_table, Table};
use crate::observables::{localization_report, localized_growth};
use crate::rng::RngStream;
use crate::sde::simulate;

/// In-memory results of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct Outputs {
    pub tables: Vec<(String, Table)>,
    pub summary: Vec<(String, String)>,
}

impl Outputs {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }
}

fn kv(k: &str, v: impl ToString) -> (String, String) {
    (k.to_string(), v.to_string())
}

fn universality_outputs(rep: &UniversalityReport, out: &mut Outputs) {
    let mut t = Table::new(&["n", "observable", "mean_diff", "se", "mean_a", "mean_b", "replicas"]);
    for r in &rep.rows {
        t.push(vec![
            r.n.to_string(),
            r.observable.clone(),
            fmt_num(r.mean_diff),
            fmt_num(r.se),
            fmt_num(r.mean_a),
            fmt_num(r.mean_b),
            r.replicas.to_string(),
        ]);
    }
    let mut s = Table::new(&["observable", "slope", "slope_se", "lower", "upper"]);
    for f in &rep.slopes {
        s.push(vec![f.observable.clone(), fmt_num(f.slope), fmt_num(f.slope_se), fmt_num(f.lower), fmt_num(f.upper)]);
        out.summary.push(kv(&format!("slope.{}", f.observable), fmt_num(f.slope)));
    }
    out.tables.push(("results.csv".into(), t));
    out.tables.push(("slopes.csv".into(), s));
}

/// Runs the configured experiment on the current rayon pool.
pub fn execute(cfg: &RunConfig) -> Result<Outputs> {
    let mut out = Outputs { tables: Vec::new(), summary: vec![kv("experiment", cfg.experiment), kv("seed", cfg.effective_seed())] };
    match cfg.experiment {
        ExperimentKind::Simulate => {
            let ec = cfg.experiment_config()?;
            ec.validate()?;
            let n = ec.sizes[0];
            let stream = RngStream::new(ec.seed, 0).child(n as u64).child(0);
            let x0 = sample_initial(&InitialLaw::iid(n, ec.initial), &stream);
            let c = sample_matrix(ec.arms[0], &ec.profile.build(n)?, ec.symmetric, &stream, 0)?;
            let params = Arc::new(ec.template.build(&c.j)?);
            let times: Vec<f64> = ec.observables.iter().flat_map(|o| o.times.iter().copied()).collect();
            let traj = simulate(&params, &x0, &ec.integrator.build(&times)?, &stream)?;
            let mut obs = Table::new(&["observable", "value"]);
            for o in &ec.observables {
                obs.push(vec![o.name.clone(), fmt_num(o.eval(&traj)?)]);
            }
            let loc = localization_report(&traj)?;
            let (sup, bound) = localized_growth(&traj)?;
            out.summary.extend([
                kv("n", n),
                kv("steps", traj.steps.last().copied().unwrap_or(0)),
                kv("r_effective", fmt_num(loc.r_effective)),
                kv("sup_norm_sq_over_n", fmt_num(sup)),
                kv("gronwall_bound", fmt_num(bound)),
            ]);
            out.tables.push(("trajectory.csv".into(), trajectory_table(&traj)));
            out.tables.push(("observables.csv".into(), obs));
        }
        ExperimentKind::Universality => universality_outputs(&run_universality(&cfg.experiment_config()?)?, &mut out),
        ExperimentKind::Hopfield => universality_outputs(&run_hopfield(&cfg.experiment_config()?)?, &mut out),
        ExperimentKind::Concentration => {
            let rep = run_concentration(&cfg.experiment_config()?, &cfg.exp.thresholds)?;
            let mut t = Table::new(&["n", "observable", "sup_std", "dev_mean", "dev_std", "replicas"]);
            let mut tails = Table::new(&["n", "observable", "lambda", "fraction"]);
            for r in &rep.rows {
                t.push(vec![r.n.to_string(), r.observable.clone(), fmt_num(r.sup_std), fmt_num(r.dev_mean), fmt_num(r.dev_std), r.replicas.to_string()]);
                for (l, f) in &r.tails {
                    tails.push(vec![r.n.to_string(), r.observable.clone(), fmt_num(*l), fmt_num(*f)]);
                }
            }
            out.tables.push(("results.csv".into(), t));
            out.tables.push(("tails.csv".into(), tails));
        }
        ExperimentKind::Aging => {
            let rep = run_aging(&cfg.experiment_config()?, &cfg.aging)?;
            let mut t = Table::new(&["n", "s", "lambda", "ratio_a", "se_a", "ratio_b", "se_b", "gap"]);
            for r in &rep.rows {
                t.push(vec![
                    r.n.to_string(),
                    fmt_num(r.s),
                    fmt_num(r.lambda),
                    fmt_num(r.ratio[0]),
                    fmt_num(r.se[0]),
                    fmt_num(r.ratio[1]),
                    fmt_num(r.se[1]),
                    fmt_num(r.gap),
                ]);
            }
            for ((n, used), (_, dropped)) in rep.used.iter().zip(&rep.dropped) {
                out.summary.push(kv(&format!("used.{n}"), format!("{} {}", used[0], used[1])));
                out.summary.push(kv(&format!("dropped.{n}"), format!("{} {}", dropped[0], dropped[1])));
            }
            out.tables.push(("results.csv".into(), t));
        }
        ExperimentKind::TaylorCheck => {
            let rep = run_taylor_vs_mc(&cfg.taylor_config())?;
            let mut t = Table::new(&["k", "term", "partial_sum", "mc_reference", "mc_se"]);
            for (k, (term, partial)) in rep.series.terms.iter().zip(&rep.series.partial_sums).enumerate() {
                t.push(vec![k.to_string(), fmt_num(*term), fmt_num(*partial), fmt_num(rep.mc_mean), fmt_num(rep.mc_se)]);
            }
            out.summary.extend([
                kv("series", fmt_num(rep.series.value)),
                kv("tail_bound", fmt_num(rep.series.tail_bound)),
                kv("mc_mean", fmt_num(rep.mc_mean)),
                kv("mc_se", fmt_num(rep.mc_se)),
                kv("z", fmt_num(rep.z)),
                kv("divergence_warning", rep.divergence_warning),
            ]);
            out.tables.push(("results.csv".into(), t));
        }
        ExperimentKind::MomentsCheck => {
            let mc = MomentsCheckConfig {
                n: cfg.moments.n,
                dists: [cfg.ensemble.dist, cfg.ensemble.alt_dist],
                profile: cfg.ensemble.profile.clone(),
                symmetric: cfg.ensemble.symmetric,
                initial: cfg.initial,
                template: cfg.system.clone(),
                polys: cfg.moments.polys.clone(),
                max_word: cfg.moments.max_word,
            };
            let rows = run_moments_check(&mc)?;
            let mut t = Table::new(&["seed", "word", "actual", "bound", "monomials", "vanishing", "max_vanishing_gap", "max_gap"]);
            for r in &rows {
                t.push(vec![
                    r.seed.clone(),
                    r.word_label(),
                    r.actual.to_string(),
                    r.bound.to_string(),
                    r.monomials.to_string(),
                    r.vanishing.to_string(),
                    fmt_num(r.max_vanishing_gap),
                    fmt_num(r.max_gap),
                ]);
            }
            out.summary.extend([
                kv("words", rows.len()),
                kv("bounds_hold", rows.iter().all(|r| r.actual <= r.bound)),
                kv("max_vanishing_gap", fmt_num(rows.iter().map(|r| r.max_vanishing_gap).fold(0.0, f64::max))),
            ]);
            out.tables.push(("results.csv".into(), t));
        }
        ExperimentKind::Rayleigh => {
            let rep = run_rayleigh(&cfg.experiment_config()?)?;
            let mut t = Table::new(&["arm", "replica", "time", "quotient"]);
            for r in &rep.rows {
                t.push(vec![r.arm.to_string(), r.replica.to_string(), fmt_num(r.time), fmt_num(r.quotient)]);
            }
            let mut s = Table::new(&["arm", "replica", "top_eigenvalue", "final_quotient", "gap", "monotone"]);
            for r in &rep.summaries {
                s.push(vec![
                    r.arm.to_string(),
                    r.replica.to_string(),
                    fmt_num(r.top_eigenvalue),
                    fmt_num(r.final_quotient),
                    fmt_num(r.gap),
                    r.monotone.to_string(),
                ]);
            }
            out.summary.extend([kv("n", rep.n), kv("max_arm_gap", fmt_num(rep.max_arm_gap))]);
            out.tables.push(("results.csv".into(), t));
            out.tables.push(("eigen.csv".into(), s));
        }
    }
    Ok(out)
}

/// Runs `f` on a dedicated pool of `threads` workers, or the global pool.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(Error::InvalidArgument("thread count must be positive".into())),
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .map_err(|e| Error::InvalidArgument(format!("cannot build thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Executes `cfg` and writes its artifacts into `cfg.out`. Returns the paths
/// written, the resolved configuration first.
pub fn run(cfg: &RunConfig, threads: Option<usize>) -> Result<Vec<PathBuf>> {
    let resolved = cfg.to_text();
    let hash = cfg.hash();
    let outputs = with_threads(threads, || execute(cfg))??;
    write_outputs(&cfg.out, &resolved, &hash, &outputs)
}

pub fn write_outputs(dir: &Path, resolved: &str, hash: &str, outputs: &Outputs) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let p = dir.join("config.resolved.ini");
    write_atomic(&p, resolved.as_bytes())?;
    written.push(p);
    for (name, table) in &outputs.tables {
        let p = dir.join(name);
        write_table(&p, table, hash)?;
        written.push(p);
    }
    let mut summary = outputs.summary.clone();
    summary.push(kv("config_hash", hash));
    let p = dir.join("summary.txt");
    write_atomic(&p, render_summary(&summary).as_bytes())?;
    written.push(p);
    Ok(written)
}
