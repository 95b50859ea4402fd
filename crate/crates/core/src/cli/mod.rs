//! The `fz` command line.
//!
//! Exit codes: 0 pass, 1 unreadable or malformed input, 2 rejected input or
//! failed check, 3 disagreement between routes that must agree.

mod selftest;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::corpus::{corpus_dir, load_corpus};
use crate::error::{FzError, Result};
use crate::finsys::{load_factor_file, load_system_file, FactorMap, FinSystem, SystemDoc, DEFAULT_GROUP_CAP};
use crate::linalg::CMatrix;
use crate::skew::{
    extract_cocycle, load_cocycle_file, mackey_range, skew_build, verify_cocycle, UnitaryCocycleBundle,
    DEFAULT_MACKEY_BUDGET,
};
use crate::structure::{
    classify_compact_with, dichotomy, furstenberg_tower, rel_wm_extension, ClassifyOptions, Criterion,
};

pub use selftest::{run_selftest, Check, SelftestReport, ORACLE_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Over {
    /// Treat the input as a factor document.
    Factor,
    /// Treat the input as a system over the one-point system.
    Trivial,
    /// Treat the input as a system over itself.
    #[value(name = "self")]
    Identity,
}

#[derive(Debug, Parser)]
#[command(name = "fz", version, about = "Relative structure of finite measure-preserving systems")]
pub struct Cli {
    /// Tolerance for analytic checks.
    #[arg(long, global = true, default_value_t = 1e-9)]
    pub tol: f64,
    /// Largest acting group that will be enumerated.
    #[arg(long, global = true, default_value_t = DEFAULT_GROUP_CAP)]
    pub group_cap: usize,
    /// Largest number of transfer maps the Mackey search may visit.
    #[arg(long, global = true, default_value_t = DEFAULT_MACKEY_BUDGET)]
    pub mackey_budget: u128,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ExtensionArg {
    /// Factor document, or a system document with `--over trivial|self`.
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = Over::Factor)]
    pub over: Over,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a system document and optionally a factor document.
    Validate {
        system: PathBuf,
        #[arg(long)]
        factor: Option<PathBuf>,
    },
    /// Evaluate all six compactness criteria for an extension.
    Classify {
        #[command(flatten)]
        ext: ExtensionArg,
        #[arg(long, hide = true)]
        inject_fault: Option<String>,
    },
    /// Split L²(X) into almost periodic and weakly mixing parts.
    Dichotomy {
        #[command(flatten)]
        ext: ExtensionArg,
    },
    /// Decide relative weak mixing along all three routes.
    Wm {
        #[command(flatten)]
        ext: ExtensionArg,
    },
    /// Build the tower of compact extensions up to a weakly mixing top.
    Tower {
        system: PathBuf,
        #[arg(long)]
        max_rank: Option<usize>,
    },
    /// Build the homogeneous skew product of a cocycle document.
    Skew { cocycle: PathBuf },
    /// Find the smallest subgroup a cocycle can be conjugated into.
    Mackey { cocycle: PathBuf },
    /// Read off unitary cocycles from the invariant modules of an extension.
    Extract {
        #[command(flatten)]
        ext: ExtensionArg,
    },
    /// Run every invariant check on the fixture corpus.
    Selftest {
        /// Fixture directory; defaults to `FZ_CORPUS` or the bundled corpus.
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
}

/// A finished command: machine report, human summary, exit code.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub json: Value,
    pub text: String,
    pub code: i32,
}

impl Outcome {
    fn new(report: &impl Serialize, text: String, code: i32) -> Self {
        Self { json: serde_json::to_value(report).expect("reports serialize"), text, code }
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => serde_json::to_string_pretty(&self.json).expect("values serialize") + "\n",
            Format::Text => self.text.clone(),
        }
    }
}

/// Parses arguments, runs the command, writes the report and returns the
/// exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(outcome) => {
            let rendered = outcome.render(cli.format);
            let written = match &cli.out {
                Some(path) => std::fs::write(path, rendered).map_err(FzError::from),
                None => {
                    print!("{rendered}");
                    Ok(())
                }
            };
            match written {
                Ok(()) => outcome.code,
                Err(e) => report_error(&e),
            }
        }
        Err(e) => report_error(&e),
    }
}

fn report_error(e: &FzError) -> i32 {
    eprintln!("fz: {e}");
    e.exit_code()
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    if !(cli.tol > 0.0) {
        return Err(FzError::Schema("--tol must be positive".into()));
    }
    if cli.group_cap == 0 || cli.mackey_budget == 0 {
        return Err(FzError::Schema("--group-cap and --mackey-budget must be positive".into()));
    }
    match &cli.command {
        Command::Validate { system, factor } => cmd_validate(cli, system, factor.as_deref()),
        Command::Classify { ext, inject_fault } => cmd_classify(cli, ext, inject_fault.as_deref()),
        Command::Dichotomy { ext } => cmd_dichotomy(cli, ext),
        Command::Wm { ext } => {
            let pi = load_extension(cli, ext)?;
            let r = rel_wm_extension(&pi)?;
            let text = format!(
                "relatively weakly mixing: {}\n  wm span: {}  ap = base: {}  relative product: {}\n  dims: kernel {} ap {} wm {} inv(X×X) {} inv(Y) {}\n",
                r.is_wm,
                r.route_wm_span,
                r.route_ap_is_base,
                r.route_relprod_inv,
                r.kernel_dim,
                r.ap_dim,
                r.wm_dim,
                r.inv_relprod_dim,
                r.inv_base_dim
            );
            Ok(Outcome::new(&r, text, 0))
        }
        Command::Tower { system, max_rank } => cmd_tower(cli, system, *max_rank),
        Command::Skew { cocycle } => cmd_skew(cli, cocycle),
        Command::Mackey { cocycle } => cmd_mackey(cli, cocycle),
        Command::Extract { ext } => cmd_extract(cli, ext),
        Command::Selftest { corpus } => {
            let dir = corpus.clone().unwrap_or_else(corpus_dir);
            let corpus = load_corpus(&dir, cli.group_cap)?;
            let report = run_selftest(&corpus, cli.tol, cli.mackey_budget);
            let mut text = String::new();
            for c in &report.checks {
                text.push_str(&format!("{} {} ({})\n", if c.passed { "ok  " } else { "FAIL" }, c.name, c.detail));
            }
            text.push_str(&format!("{} passed, {} failed\n", report.passed, report.failed));
            let code = report.exit_code();
            Ok(Outcome::new(&report, text, code))
        }
    }
}

fn load_system(cli: &Cli, path: &Path) -> Result<Arc<FinSystem>> {
    Ok(Arc::new(load_system_file(path)?.with_group_cap(cli.group_cap)))
}

/// Loads the extension and rejects factor maps that fail validation.
fn load_extension(cli: &Cli, ext: &ExtensionArg) -> Result<FactorMap> {
    match ext.over {
        Over::Factor => {
            let pi = load_factor_file(&ext.input, cli.group_cap)?;
            match pi.validate().failure() {
                Some(msg) => Err(FzError::Validation(msg)),
                None => Ok(pi),
            }
        }
        Over::Trivial => Ok(FactorMap::to_trivial(load_system(cli, &ext.input)?)),
        Over::Identity => Ok(FactorMap::identity(load_system(cli, &ext.input)?)),
    }
}

fn cmd_validate(cli: &Cli, system: &Path, factor: Option<&Path>) -> Result<Outcome> {
    let sys = load_system(cli, system)?;
    let group = sys.group()?;
    let mut text = format!("system: {} atoms, {} generators, group of order {}\n", sys.len(), sys.generators().len(), group.len());
    let mut report = json!({
        "system": { "atoms": sys.len(), "generators": sys.generators().len(), "group_order": group.len(), "valid": true }
    });
    let mut code = 0;
    if let Some(path) = factor {
        let pi = load_factor_file(path, cli.group_cap)?;
        let fr = pi.validate();
        match fr.failure() {
            Some(msg) => {
                code = 2;
                eprintln!("fz: factor rejected: {msg}");
                text.push_str(&format!("factor: rejected ({msg})\n"));
            }
            None => text.push_str(&format!("factor: {} → {} atoms, valid\n", pi.source().len(), pi.target().len())),
        }
        report["factor"] = serde_json::to_value(&fr)?;
    }
    Ok(Outcome { json: report, text, code })
}

fn cmd_classify(cli: &Cli, ext: &ExtensionArg, fault: Option<&str>) -> Result<Outcome> {
    let pi = load_extension(cli, ext)?;
    let mut opts = ClassifyOptions::new();
    if let Some(name) = fault {
        opts.fault =
            Some(Criterion::parse(name).ok_or_else(|| FzError::Schema(format!("unknown criterion {name:?}")))?);
    }
    let r = classify_compact_with(&pi, &opts)?;
    let mut text = format!("relatively compact: {}\n", r.relatively_compact);
    for c in &r.criteria {
        text.push_str(&format!("  ({}) {}: {}\n", c.criterion, c.holds, c.witness));
    }
    if !r.agreement {
        text.push_str("criteria disagree\n");
        eprintln!("fz: compactness criteria disagree");
    }
    let code = if r.agreement { 0 } else { 3 };
    Ok(Outcome::new(&r, text, code))
}

fn cmd_dichotomy(cli: &Cli, ext: &ExtensionArg) -> Result<Outcome> {
    let pi = load_extension(cli, ext)?;
    let d = dichotomy(&pi)?;
    let text = format!(
        "AP dimension {}, WM dimension {} of {}\n  cross inner products ≤ {:.2e}, orthonormality defect {:.2e}, spans: {}\n  orbit oracle agrees: {}\n",
        d.ap_dim, d.wm_dim, d.total_dim, d.cross_max, d.orthonormality_defect, d.spans, d.oracle_agrees
    );
    let code = if !d.oracle_agrees {
        3
    } else if d.spans && d.cross_max <= cli.tol {
        0
    } else {
        2
    };
    Ok(Outcome::new(&d, text, code))
}

fn cmd_tower(cli: &Cli, system: &Path, max_rank: Option<usize>) -> Result<Outcome> {
    let sys = load_system(cli, system)?;
    let t = furstenberg_tower(&sys, max_rank)?;
    let mut text = format!("tower of length {}\n", t.length);
    for (i, lvl) in t.levels.iter().enumerate() {
        text.push_str(&format!("  Y{i}: {} atoms", lvl.atoms));
        if let Some((lo, hi)) = lvl.fiber_range {
            text.push_str(&format!(", fibers {lo}..={hi}, compact {}", lvl.relatively_compact.unwrap_or(false)));
        }
        if lvl.rank_cap_relaxed {
            text.push_str(", rank cap relaxed");
        }
        text.push('\n');
    }
    text.push_str(&format!("  top relatively weakly mixing: {}\n", t.top.is_wm));
    Ok(Outcome::new(&t, text, 0))
}

fn cmd_skew(cli: &Cli, path: &Path) -> Result<Outcome> {
    let spec = load_cocycle_file(path, cli.group_cap)?;
    let table = spec.cocycle.enumerate(cli.group_cap)?;
    let law = verify_cocycle(&table);
    let (sys, pi) = skew_build(&spec.cocycle, &spec.subgroup)?;
    let compact = classify_compact_with(&pi, &ClassifyOptions::new())?;
    let inv = crate::ergodic::invariant_factor(&sys)?;
    let report = json!({
        "atoms": sys.len(),
        "ergodic": inv.ergodic,
        "invariant_dimension": inv.inv_dimension,
        "cocycle_law": law,
        "relatively_compact": compact.relatively_compact,
        "agreement": compact.agreement,
        "system": SystemDoc::from_system(&sys),
    });
    let text = format!(
        "skew product: {} atoms, ergodic {}, cocycle law {}, relatively compact {}\n",
        sys.len(),
        inv.ergodic,
        law.ok,
        compact.relatively_compact
    );
    let code = if !compact.agreement {
        3
    } else if law.ok && compact.relatively_compact {
        0
    } else {
        2
    };
    Ok(Outcome { json: report, text, code })
}

fn cmd_mackey(cli: &Cli, path: &Path) -> Result<Outcome> {
    let spec = load_cocycle_file(path, cli.group_cap)?;
    let m = mackey_range(&spec.cocycle, cli.mackey_budget)?;
    let group = spec.cocycle.group();
    let base = spec.cocycle.base();
    let transfer: serde_json::Map<String, Value> = m
        .transfer
        .iter()
        .enumerate()
        .map(|(y, &k)| (base.space().atom_id(y).to_string(), Value::from(group.label(k))))
        .collect();
    let report = json!({
        "subgroup": m.subgroup.labels(),
        "order": m.subgroup.order(),
        "group_order": group.len(),
        "transfer": transfer,
        "candidates_checked": m.candidates_checked.to_string(),
    });
    let text = format!(
        "Mackey range: {{{}}} (order {} of {})\n",
        m.subgroup.labels().join(", "),
        m.subgroup.order(),
        group.len()
    );
    Ok(Outcome { json: report, text, code: 0 })
}

fn matrix_json(m: &CMatrix) -> Value {
    Value::from((0..m.nrows()).map(|i| (0..m.ncols()).map(|j| vec![m[(i, j)].re, m[(i, j)].im]).collect::<Vec<_>>()).collect::<Vec<_>>())
}

/// The bundle with every `Λ_γ(y)` spelled out, keyed by element word and
/// factor atom.
pub fn bundle_json(bundle: &UnitaryCocycleBundle, pi: &FactorMap) -> Value {
    let mut out = serde_json::to_value(bundle).expect("bundle serializes");
    let ids = pi.target().space().atoms();
    for (m, module) in bundle.modules.iter().enumerate() {
        let lambdas: serde_json::Map<String, Value> = module
            .lambdas
            .iter()
            .zip(&bundle.elements)
            .map(|(per_y, word)| {
                let per_y: serde_json::Map<String, Value> =
                    per_y.iter().zip(ids).map(|(l, id)| (id.clone(), matrix_json(l))).collect();
                (word.clone(), Value::Object(per_y))
            })
            .collect();
        out["modules"][m]["lambdas"] = Value::Object(lambdas);
        out["modules"][m]["frame"] =
            Value::from(module.frame.iter().map(|f| serde_json::to_value(f.to_doc()).expect("doc")).collect::<Vec<_>>());
    }
    out
}

fn cmd_extract(cli: &Cli, ext: &ExtensionArg) -> Result<Outcome> {
    let pi = load_extension(cli, ext)?;
    let b = extract_cocycle(&pi, None)?;
    let mut text = format!("{} invariant modules\n", b.modules.len());
    for (i, m) in b.modules.iter().enumerate() {
        text.push_str(&format!(
            "  module {i}: rank {}, unimodular {}, defects {:.2e}/{:.2e}/{:.2e}\n",
            m.dimension, m.unimodular, m.unitarity_defect, m.frame_equation_defect, m.cocycle_law_defect
        ));
    }
    let code = if b.passes(cli.tol) { 0 } else { 3 };
    Ok(Outcome { json: bundle_json(&b, &pi), text, code })
}
