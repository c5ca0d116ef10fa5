//! Command-line front end. `run` returns the process exit code:
//! 0 success, 1 verification failure, 2 bad configuration.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::bounds::{check_claims, BoundParams, DEFAULT_L_GRID};
use crate::clusters::{build_hierarchy, descending_decomposition, verify_decomposition, verify_genealogy, verify_hierarchy, ClusterHierarchy};
use crate::environment::{reduce_to_chi_zero, sample_environment, validate, Environment, EnvironmentConfig};
use crate::error::{Error, Result};
use crate::layers::{build_layers, build_reversed_layers, verify_layers, LayerStack};
use crate::percolation::survival_coupled;
use crate::report::VerificationReport;
use crate::sites::{verify_tiling, SiteScale};

#[derive(Parser, Debug)]
#[command(name = "renorm-perc", version, about = "Renormalization toolkit for oriented percolation among bad lines")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    #[command(flatten)]
    opts: Opts,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Cmd {
    /// Sample an environment and export it as JSON
    Env,
    /// Build and verify the cluster hierarchy
    Hierarchy,
    /// Build and verify both layer stacks
    Layers,
    /// Survival frequency for one parameter set
    Simulate,
    /// Coupled survival survey over lists of delta, p_good and p_bad
    Sweep,
    /// Probability recursion and closing inequalities
    Bounds,
    /// Run every structural check on one sampled environment
    Verify,
    /// SVG of the hierarchy or of the layer bands
    Render,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Format {
    Json,
    Csv,
    Svg,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Target {
    Hierarchy,
    Layers,
}

/// Every flag, all optional, so a JSON config file can fill the gaps.
#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Opts {
    /// JSON file with any of these options; flags take precedence
    #[arg(long, global = true)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// Bad-line density; a comma list for sweep
    #[arg(long, global = true, value_delimiter = ',')]
    delta: Option<Vec<f64>>,
    /// Scale parameter L
    #[arg(long = "L", global = true)]
    #[serde(rename = "L")]
    l: Option<u64>,
    /// Site aspect constant, as 1/n or a decimal
    #[arg(long, global = true)]
    c: Option<String>,
    #[arg(long = "pg", global = true, value_delimiter = ',')]
    p_good: Option<Vec<f64>>,
    #[arg(long = "pb", global = true, value_delimiter = ',')]
    p_bad: Option<Vec<f64>>,
    #[arg(long, global = true)]
    kappa: Option<f64>,
    #[arg(long, global = true)]
    rho: Option<f64>,
    #[arg(long, global = true)]
    depth: Option<u64>,
    #[arg(long, global = true)]
    reps: Option<u64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long = "k-max", global = true)]
    k_max: Option<u32>,
    /// Number of lines sampled
    #[arg(long = "window", global = true)]
    window: Option<u64>,
    #[arg(long = "m-max", global = true)]
    m_max: Option<u32>,
    /// L values searched by `bounds`
    #[arg(long = "l-grid", global = true, value_delimiter = ',')]
    l_grid: Option<Vec<u64>>,
    /// Output path; stdout when absent
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// What `render` draws
    #[arg(long, global = true, value_enum)]
    what: Option<Target>,
}

impl Opts {
    /// Fields set here replace those of `base`.
    fn over(self, base: Opts) -> Opts {
        macro_rules! pick {
            ($($f:ident),*) => { Opts { config: self.config, $($f: self.$f.or(base.$f)),* } };
        }
        pick!(delta, l, c, p_good, p_bad, kappa, rho, depth, reps, seed, k_max, window, m_max, l_grid, out, format, what)
    }
}

/// Fully resolved configuration, echoed into every output.
#[derive(Debug, Clone, Serialize)]
struct RunConfig {
    subcommand: Cmd,
    delta: Vec<f64>,
    #[serde(rename = "L")]
    l: u64,
    c: String,
    p_good: Vec<f64>,
    p_bad: Vec<f64>,
    kappa: f64,
    rho: f64,
    depth: u64,
    reps: u64,
    seed: u64,
    k_max: u32,
    window: u64,
    m_max: u32,
    l_grid: Vec<u64>,
    format: Format,
    what: Target,
    #[serde(skip)]
    out: Option<PathBuf>,
    #[serde(skip)]
    c_inv: u64,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

/// 1/c from "1/6" or "0.1666…"; c itself must lie in (0,1].
fn parse_c(s: &str) -> Result<u64> {
    let c = match s.split_once('/') {
        Some((n, d)) => {
            let (n, d): (f64, f64) = (n.trim().parse().map_err(|_| bad(format!("bad c {s}")))?, d.trim().parse().map_err(|_| bad(format!("bad c {s}")))?);
            n / d
        }
        None => s.trim().parse::<f64>().map_err(|_| bad(format!("bad c {s}")))?,
    };
    if !(c > 0.0 && c <= 1.0) {
        return Err(bad(format!("c={s} outside (0,1]")));
    }
    let inv = (1.0 / c).round();
    if (1.0 / c - inv).abs() > 1e-9 {
        return Err(bad(format!("1/c must be an integer, got c={s}")));
    }
    Ok(inv as u64)
}

fn one<T: Copy>(v: &[T], name: &str) -> Result<T> {
    match v {
        [x] => Ok(*x),
        _ => Err(bad(format!("{name} takes a single value here, got {}", v.len()))),
    }
}

fn resolve(cmd: Cmd, flags: Opts) -> Result<RunConfig> {
    let file = match &flags.config {
        Some(p) => serde_json::from_str::<Opts>(&std::fs::read_to_string(p)?).map_err(|e| bad(format!("config {}: {e}", p.display())))?,
        None => Opts::default(),
    };
    let o = flags.over(file);
    let default_format = match cmd {
        Cmd::Simulate | Cmd::Sweep => Format::Csv,
        Cmd::Render => Format::Svg,
        _ => Format::Json,
    };
    let c = o.c.unwrap_or_else(|| "1/6".into());
    let cfg = RunConfig {
        subcommand: cmd,
        delta: o.delta.unwrap_or_else(|| vec![1e-6]),
        l: o.l.unwrap_or(108),
        c_inv: parse_c(&c)?,
        c,
        p_good: o.p_good.unwrap_or_else(|| vec![0.95]),
        p_bad: o.p_bad.unwrap_or_else(|| vec![0.1]),
        kappa: o.kappa.unwrap_or(3.0),
        rho: o.rho.unwrap_or(0.7),
        depth: o.depth.unwrap_or(10_000),
        reps: o.reps.unwrap_or(100),
        seed: o.seed.unwrap_or(0),
        k_max: o.k_max.unwrap_or(3),
        window: o.window.unwrap_or(1_000_000),
        m_max: o.m_max.unwrap_or(50),
        l_grid: o.l_grid.unwrap_or_else(|| DEFAULT_L_GRID.to_vec()),
        format: o.format.unwrap_or(default_format),
        what: o.what.unwrap_or(Target::Hierarchy),
        out: o.out,
    };
    for (name, v) in [("delta", &cfg.delta), ("pg", &cfg.p_good), ("pb", &cfg.p_bad)] {
        if v.is_empty() || v.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(bad(format!("{name} values must lie in [0,1]")));
        }
    }
    if cfg.reps == 0 || cfg.k_max == 0 || cfg.window == 0 {
        return Err(bad("reps, k-max and window must be positive"));
    }
    let allowed: &[Format] = match cmd {
        Cmd::Render => &[Format::Svg],
        Cmd::Simulate | Cmd::Sweep | Cmd::Bounds => &[Format::Csv, Format::Json],
        _ => &[Format::Json],
    };
    if !allowed.contains(&cfg.format) {
        return Err(bad(format!("format {:?} not available for this subcommand", cfg.format)));
    }
    Ok(cfg)
}

impl RunConfig {
    fn env_config(&self) -> Result<EnvironmentConfig> {
        let c = EnvironmentConfig::new(one(&self.delta, "delta")?, self.l, self.window, self.seed);
        c.check()?;
        Ok(c)
    }

    fn header(&self) -> String {
        let cfg = serde_json::to_string(self).expect("config serializes");
        match self.format {
            Format::Svg => format!("<!-- renorm-perc {} {} -->\n", crate::VERSION, cfg.replace("--", "- -")),
            _ => format!("# renorm-perc {} {}\n", crate::VERSION, cfg),
        }
    }

    fn emit(&self, body: &str) -> Result<()> {
        let mut text = self.header();
        text.push_str(body);
        if !text.ends_with('\n') {
            text.push('\n');
        }
        match &self.out {
            Some(p) => std::fs::write(p, text)?,
            None => std::io::stdout().lock().write_all(text.as_bytes())?,
        }
        Ok(())
    }
}

enum Outcome {
    Ok,
    Failed(String),
}

fn report_json(name: &str, r: &VerificationReport) -> serde_json::Value {
    serde_json::json!({ "suite": name, "passed": r.is_empty(), "violations": r.violations, "notes": r.notes })
}

fn hierarchy_suites(h: &ClusterHierarchy) -> Result<Vec<(&'static str, VerificationReport)>> {
    let mut dec = VerificationReport::default();
    for c in h.top_clusters().filter(|c| c.mass >= 2) {
        let d = descending_decomposition(h, c.id)?;
        dec.merge(verify_decomposition(h, c.id, &d));
    }
    Ok(vec![("hierarchy", verify_hierarchy(h)), ("genealogy", verify_genealogy(h)), ("decomposition", dec)])
}

/// Environment reduced to χ = 0, its hierarchy and both stacks.
fn stacks(cfg: &RunConfig, env: &Environment) -> Result<(Environment, ClusterHierarchy, Option<u64>, LayerStack, LayerStack)> {
    let (env, h, cut) = reduce_to_chi_zero(env, cfg.k_max)?;
    let fwd = build_layers(&env, &h)?;
    let rev = build_reversed_layers(&env, &h, &fwd)?;
    Ok((env, h, cut, fwd, rev))
}

fn finish(cfg: &RunConfig, body: serde_json::Value, failures: Vec<String>) -> Result<Outcome> {
    cfg.emit(&serde_json::to_string_pretty(&body)?)?;
    Ok(if failures.is_empty() { Outcome::Ok } else { Outcome::Failed(failures.join("; ")) })
}

fn failed_suites(suites: &[(&str, VerificationReport)]) -> Vec<String> {
    suites.iter().filter(|(_, r)| !r.is_empty()).map(|(n, r)| format!("{n}: {} violations", r.violations.len())).collect()
}

fn cmd_env(cfg: &RunConfig) -> Result<Outcome> {
    let ec = cfg.env_config()?;
    let env = sample_environment(&ec)?;
    cfg.emit(&env.to_json()?)?;
    Ok(Outcome::Ok)
}

fn cmd_hierarchy(cfg: &RunConfig) -> Result<Outcome> {
    let env = sample_environment(&cfg.env_config()?)?;
    let h = build_hierarchy(&env, cfg.k_max)?;
    let suites = hierarchy_suites(&h)?;
    let body = serde_json::json!({
        "hierarchy": serde_json::from_str::<serde_json::Value>(&h.to_json()?)?,
        "checks": suites.iter().map(|(n, r)| report_json(n, r)).collect::<Vec<_>>(),
    });
    finish(cfg, body, failed_suites(&suites))
}

fn cmd_layers(cfg: &RunConfig) -> Result<Outcome> {
    let env = sample_environment(&cfg.env_config()?)?;
    let (_, h, cut, fwd, rev) = stacks(cfg, &env)?;
    let suites = vec![("layers", verify_layers(&fwd, &rev, &h))];
    let body = serde_json::json!({
        "zero_prefix": cut,
        "forward": serde_json::from_str::<serde_json::Value>(&fwd.to_json()?)?,
        "reversed": serde_json::from_str::<serde_json::Value>(&rev.to_json()?)?,
        "checks": suites.iter().map(|(n, r)| report_json(n, r)).collect::<Vec<_>>(),
    });
    finish(cfg, body, failed_suites(&suites))
}

fn cmd_verify(cfg: &RunConfig) -> Result<Outcome> {
    let ec = cfg.env_config()?;
    let env = sample_environment(&ec)?;
    let (_, h, cut, fwd, rev) = stacks(cfg, &env)?;
    let mut suites = hierarchy_suites(&h)?;
    suites.push(("layers", verify_layers(&fwd, &rev, &h)));
    let scale = SiteScale::new(cfg.c_inv, cfg.l)?;
    let mut tiling = VerificationReport::default();
    let k_cap = cfg.k_max.min(2);
    for k in 1..=k_cap {
        let w = scale.width(k)?;
        let rows = (0, (3 * w as u64).min(cfg.window.saturating_sub(1)));
        for st in [&fwd, &rev] {
            tiling.merge(verify_tiling(st, k, &scale, (-w, w), rows));
        }
    }
    suites.push(("site_tiling", tiling));
    let gates = validate(&ec, Some(1.0 / cfg.c_inv as f64), None);
    let body = serde_json::json!({
        "zero_prefix": cut,
        "bad_lines": env.gamma.len(),
        "gates": gates.gates,
        "checks": suites.iter().map(|(n, r)| report_json(n, r)).collect::<Vec<_>>(),
    });
    finish(cfg, body, failed_suites(&suites))
}

fn cmd_sweep(cfg: &RunConfig, single: bool) -> Result<Outcome> {
    if single {
        cfg.env_config()?;
        one(&cfg.p_good, "pg")?;
        one(&cfg.p_bad, "pb")?;
    }
    let mut rows = Vec::new();
    let mut violations = 0u64;
    for &pg in &cfg.p_good {
        for &pb in &cfg.p_bad {
            let s = survival_coupled(&cfg.delta, cfg.l, pg, pb, cfg.depth, cfg.reps, cfg.seed)?;
            violations += s.nesting_violations;
            rows.extend(s.rows);
        }
    }
    let body = match cfg.format {
        Format::Json => serde_json::to_string_pretty(&serde_json::json!({ "rows": rows, "nesting_violations": violations }))?,
        _ => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in &rows {
                w.serialize(r)?;
            }
            String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?).expect("csv is utf-8")
        }
    };
    cfg.emit(&body)?;
    Ok(if violations == 0 { Outcome::Ok } else { Outcome::Failed(format!("{violations} coupling nesting violations")) })
}

fn cmd_bounds(cfg: &RunConfig) -> Result<Outcome> {
    let params = BoundParams::new(one(&cfg.p_good, "pg")?, one(&cfg.p_bad, "pb")?, cfg.kappa, cfg.rho, 1.0 / cfg.c_inv as f64, cfg.l)?;
    let r = check_claims(&params, cfg.m_max, &cfg.l_grid)?;
    let body = match cfg.format {
        Format::Json => serde_json::to_string_pretty(&r)?,
        _ => {
            let mut out = format!(
                "# N={} J={:.6} floor_J={} Theta={:.15} J*Theta^kappa={:.6} minimal_L_rho={} minimal_L_rho_hat={}\n",
                r.n,
                r.j,
                r.j_floor,
                r.theta.value,
                r.j_theta_kappa,
                r.minimal_l.rho.map_or("none".into(), |l| l.to_string()),
                r.minimal_l.rho_hat.map_or("none".into(), |l| l.to_string()),
            );
            let mut buf = Vec::new();
            r.write_csv(&mut buf)?;
            out.push_str(&String::from_utf8(buf).expect("csv is utf-8"));
            out
        }
    };
    cfg.emit(&body)?;
    Ok(Outcome::Ok)
}

fn svg_rect(out: &mut String, x: f64, y: f64, w: f64, h: f64, fill: &str, title: &str) {
    out.push_str(&format!(
        "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{:.2}\" height=\"{h:.2}\" fill=\"{fill}\" stroke=\"#333\" stroke-width=\"0.3\"><title>{title}</title></rect>\n",
        w.max(0.5)
    ));
}

const PALETTE: [&str; 6] = ["#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#b07aa1", "#9c755f"];

fn cmd_render(cfg: &RunConfig) -> Result<Outcome> {
    let env = sample_environment(&cfg.env_config()?)?;
    let width = 1200.0;
    let sx = width / cfg.window as f64;
    let mut body = String::new();
    let height;
    match cfg.what {
        Target::Hierarchy => {
            let h = build_hierarchy(&env, cfg.k_max)?;
            let band = 24.0;
            height = band * (h.levels.len() as f64) + 20.0;
            for (lvl, ids) in h.levels.iter().enumerate() {
                for &id in ids {
                    let c = h.get(id);
                    let title = format!("level {} mass {} span {}..{}", c.level, c.mass, c.span.0, c.span.1);
                    let x = c.span.0 as f64 * sx;
                    let w = (c.span.1 - c.span.0 + 1) as f64 * sx;
                    svg_rect(&mut body, x, 10.0 + band * lvl as f64, w, band - 4.0, PALETTE[c.level as usize % PALETTE.len()], &title);
                }
            }
        }
        Target::Layers => {
            let (_, _, _, fwd, rev) = stacks(cfg, &env)?;
            let band = 18.0;
            let k_max = fwd.k_max();
            height = band * 2.0 * k_max as f64 + 30.0;
            for (i, st) in [&fwd, &rev].into_iter().enumerate() {
                for k in 1..=k_max {
                    let y = 10.0 + band * ((i as u32 * k_max + k - 1) as f64) + if i == 1 { 10.0 } else { 0.0 };
                    for l in &st.scale(k)?.layers {
                        if l.is_empty() {
                            continue;
                        }
                        let fill = if l.is_good() { PALETTE[(l.rank % 2) as usize] } else { PALETTE[3] };
                        let title = format!("{:?} k={k} rank {} {:?} rows {}..{}", st.direction, l.rank, l.kind, l.lo(), l.hi());
                        svg_rect(&mut body, l.lo() as f64 * sx, y, (l.hi() - l.lo() + 1) as f64 * sx, band - 3.0, fill, &title);
                    }
                }
            }
        }
    }
    let svg = format!("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">\n{body}</svg>\n");
    cfg.emit(&svg)?;
    Ok(Outcome::Ok)
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Domain(_) | Error::OutOfRange(_) | Error::UnsupportedScale { .. } | Error::Json(_) => 2,
        _ => 1,
    }
}

/// Parses `argv` (program name first) and runs the subcommand.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let cfg = match resolve(cli.cmd, cli.opts) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let res = match cfg.subcommand {
        Cmd::Env => cmd_env(&cfg),
        Cmd::Hierarchy => cmd_hierarchy(&cfg),
        Cmd::Layers => cmd_layers(&cfg),
        Cmd::Simulate => cmd_sweep(&cfg, true),
        Cmd::Sweep => cmd_sweep(&cfg, false),
        Cmd::Bounds => cmd_bounds(&cfg),
        Cmd::Verify => cmd_verify(&cfg),
        Cmd::Render => cmd_render(&cfg),
    };
    match res {
        Ok(Outcome::Ok) => 0,
        Ok(Outcome::Failed(why)) => {
            eprintln!("verification failed: {why}");
            1
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
