use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use reachmesh::dubins::OrientedPoint;
use reachmesh::envelope::{EnvelopeError, EnvelopeQuery};
use reachmesh::refine::{run_algorithm1, run_algorithm2};
use reachmesh::scp::{scp_loop, NoRefine, ScpOptions};
use reachmesh::transcription::Mesh;
use reachmesh_cli::artifact::write_atomic;
use reachmesh_cli::config::parse_number;
use reachmesh_cli::{envelope_cmd, exit, verify, Config, Mode, RunArtifact, Termination};

/// Trajectory optimization with envelope-driven mesh refinement.
#[derive(Parser)]
#[command(name = "reachmesh", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve a problem file and write the run artifact (JSON) and trajectory (CSV).
    Solve {
        problem: PathBuf,
        /// Plain SCP on the initial mesh.
        #[arg(long, conflicts_with = "outer_loop")]
        no_refine: bool,
        /// Refine only between converged solves.
        #[arg(long)]
        outer_loop: bool,
        #[arg(long)]
        max_iter: Option<usize>,
        /// Overrides the seed of the problem file.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "run.json")]
        out: PathBuf,
    },
    /// Patch cover of one query. Angles accept "pi/4" style values.
    Envelope {
        #[arg(long, num_args = 3, allow_negative_numbers = true, value_names = ["X", "Y", "THETA"])]
        start: Vec<String>,
        #[arg(long, num_args = 3, allow_negative_numbers = true, value_names = ["X", "Y", "THETA"])]
        end: Vec<String>,
        #[arg(long)]
        length: f64,
        #[arg(long)]
        kappa: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Audit a run artifact: patch cover, patch depth and dense clearance.
    Verify {
        artifact: PathBuf,
        /// Curves sampled per interval; 0 checks clearance only.
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

const MAX_OUTER: usize = 20;

fn emit(json: &str, out: Option<&Path>) -> anyhow::Result<()> {
    match out {
        Some(p) => write_atomic(p, json.as_bytes()).with_context(|| format!("writing {}", p.display())),
        None => match writeln!(std::io::stdout().lock(), "{json}") {
            Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
            r => r.context("writing to stdout"),
        },
    }
}

fn solve(problem: &Path, no_refine: bool, outer_loop: bool, max_iter: Option<usize>, seed: Option<u64>, out: &Path) -> anyhow::Result<u8> {
    let cfg = match Config::load(problem).and_then(|c| c.problem().map(|p| (c, p))) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("invalid config: {e}");
            return Ok(exit::INVALID);
        }
    };
    let (cfg, p) = cfg;
    let mut opts = ScpOptions::default();
    if let Some(n) = max_iter {
        opts.max_iter = n;
    }
    let mesh = Mesh::uniform(cfg.n_nodes);
    let guess = p.linear_guess(&mesh);
    let (mode, outcome) = if no_refine {
        (Mode::Plain, scp_loop(&p, mesh, guess, &opts, &mut NoRefine).map(|r| (r, Vec::new())))
    } else if outer_loop {
        (Mode::OuterLoop, run_algorithm1(&p, mesh, guess, &opts, MAX_OUTER))
    } else {
        (Mode::Refined, run_algorithm2(&p, mesh, guess, &opts).map(|(r, _)| (r, Vec::new())))
    };
    let Some(art) = RunArtifact::from_outcome(mode, seed.unwrap_or(cfg.seed), &p, &opts, &outcome) else {
        eprintln!("solve failed: {}", outcome.err().map(|e| e.to_string()).unwrap_or_default());
        return Ok(exit::NON_CONVERGED);
    };
    art.write(out).with_context(|| format!("writing {}", out.display()))?;
    let t = &art.timing;
    eprintln!(
        "{:?}: {} iterations, {} nodes, tf {:.3} s; subproblem {:.2}/{:.2} ms, refine {:.2}/{:.2} ms (mean/max)",
        art.termination,
        art.iterations.len(),
        art.final_mesh.len(),
        art.final_trajectory.last().map_or(0.0, |n| n.t),
        t.mean_subproblem_ms,
        t.max_subproblem_ms,
        t.mean_refine_ms,
        t.max_refine_ms
    );
    Ok(match art.termination {
        Termination::Converged => exit::OK,
        Termination::NonConverged { .. } => exit::NON_CONVERGED,
        Termination::BudgetExceeded { .. } => exit::BUDGET_EXCEEDED,
    })
}

fn pose(v: &[String], name: &str) -> Result<OrientedPoint<f64>, String> {
    let n: Vec<f64> = v.iter().map(|s| parse_number(s).map_err(|e| format!("--{name}: {e}"))).collect::<Result<_, _>>()?;
    Ok(OrientedPoint::new(n[0], n[1], n[2]))
}

fn envelope(start: &[String], end: &[String], length: f64, kappa: f64, out: Option<&Path>) -> anyhow::Result<u8> {
    let (s, e) = match (pose(start, "start"), pose(end, "end")) {
        (Ok(s), Ok(e)) => (s, e),
        (Err(m), _) | (_, Err(m)) => {
            eprintln!("{m}");
            return Ok(exit::INVALID);
        }
    };
    let q = EnvelopeQuery::new(s, e, length, kappa);
    match envelope_cmd::envelope(&q) {
        Ok(o) => {
            emit(&serde_json::to_string_pretty(&o)?, out)?;
            Ok(exit::OK)
        }
        Err(EnvelopeError::InfeasibleQuery { reason, length, dubins_min }) => {
            eprintln!("infeasible query ({reason:?}): length {length} against Dubins minimum {dubins_min}");
            Ok(exit::INVALID)
        }
        Err(err) => {
            eprintln!("{err}");
            Ok(exit::INVALID)
        }
    }
}

fn verify_cmd(artifact: &Path, samples: usize, out: Option<&Path>) -> anyhow::Result<u8> {
    let art = match RunArtifact::read(artifact) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("invalid artifact: {e}");
            return Ok(exit::INVALID);
        }
    };
    let rep = verify::verify(&art, samples)?;
    emit(&serde_json::to_string_pretty(&rep)?, out)?;
    eprintln!(
        "audited {} intervals ({} curves), {} unaudited; min clearance {:.3} m",
        rep.intervals_audited,
        rep.curves_checked,
        rep.intervals_unaudited.len(),
        rep.clearance.iter().copied().fold(f64::INFINITY, f64::min)
    );
    if rep.passed() {
        return Ok(exit::OK);
    }
    for &i in &rep.clearance_violations {
        eprintln!("violation: nfz[{i}] clearance {:.3} m", rep.clearance[i]);
    }
    let mut cover = rep.cover_violations.clone();
    cover.sort_by(|a, b| b.worst_distance.total_cmp(&a.worst_distance));
    for c in cover.iter().take(5) {
        eprintln!("violation: interval {} leaves its patches by {:.3e} m ({} points)", c.interval, c.worst_distance, c.points);
    }
    let mut depth = rep.depth_violations.clone();
    depth.sort_by(|a, b| b.depth.total_cmp(&a.depth));
    for d in depth.iter().take(5) {
        eprintln!("violation: interval {} patch {} enters expanded nfz[{}] by {:.3} m", d.interval, d.patch, d.region, d.depth);
    }
    Ok(exit::VIOLATION)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.cmd {
        Cmd::Solve { problem, no_refine, outer_loop, max_iter, seed, out } => solve(problem, *no_refine, *outer_loop, *max_iter, *seed, out),
        Cmd::Envelope { start, end, length, kappa, out } => envelope(start, end, *length, *kappa, out.as_deref()),
        Cmd::Verify { artifact, samples, out } => verify_cmd(artifact, *samples, out.as_deref()),
    };
    match res {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit::INVALID)
        }
    }
}
