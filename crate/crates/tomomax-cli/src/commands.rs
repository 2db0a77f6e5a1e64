//! Implementations of the CLI subcommands.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use tomomax::estimators::TabulatedEstimator;
use tomomax::experiment::{Axis, ExperimentDesign};
use tomomax::grid::estimator_grid;
use tomomax::io::{
    estimator_to_csv, parse_estimator_table, parse_lfp_result, write_atomic, write_json_atomic,
    EstimatorRef, LfpResultFile,
};
use tomomax::lfp::{kempthorne_lfp, mc_lfp, mc_lfp_resumed, LfpConfig, LfpError, LfpResult};
use tomomax::model::SearchConfig;
use tomomax::noisycoin::{
    bimodal_bayes_risk, bimodal_pointwise_risk, bound_haar, bound_noisy_coin, bound_pauli,
    classical_coin_reference, coin_mc_lfp, BimodalPrior, CoinLfpConfig, NoisyCoinModel,
};
use tomomax::numeric::linear_fit_slope;
use tomomax::qstate::Kind;
use tomomax::risk::RiskEvaluator;

use crate::svg::Canvas;
use crate::{Failure, Resolved};

pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

fn config_err<T: std::fmt::Display>(msg: T) -> Failure {
    Failure::Config(msg.to_string())
}

/// Build the default design for a kind and total sample count, enforcing
/// divisibility by the basis count.
pub fn default_design(kind: Kind, total: u64) -> Result<ExperimentDesign, Failure> {
    let bases = match kind {
        Kind::Rebit => 2u64,
        Kind::Qubit => 3u64,
    };
    if total == 0 || total % bases != 0 {
        return Err(config_err(format!(
            "N = {total} is not divisible by the number of bases ({bases})"
        )));
    }
    let m = (total / bases) as u32;
    Ok(match kind {
        Kind::Rebit => ExperimentDesign::rebit_default(m),
        Kind::Qubit => ExperimentDesign::qubit_default(m),
    })
}

// ---------------------------------------------------------------------------
// Estimator specs.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub enum EstimatorSpec {
    LinearInversion,
    Mle,
    Hml(f64),
    Table(PathBuf),
    Lfp(PathBuf),
}

impl EstimatorSpec {
    pub fn parse(text: &str) -> Result<Self, Failure> {
        let lower = text.trim();
        if lower == "li" || lower == "linear-inversion" {
            return Ok(Self::LinearInversion);
        }
        if lower == "mle" {
            return Ok(Self::Mle);
        }
        if let Some(rest) = lower.strip_prefix("hml:") {
            let beta: f64 = rest
                .parse()
                .map_err(|_| config_err(format!("bad hedging parameter in '{text}'")))?;
            if beta <= 0.0 {
                return Err(config_err("hedging parameter must be positive"));
            }
            return Ok(Self::Hml(beta));
        }
        if let Some(rest) = lower.strip_prefix("table:") {
            return Ok(Self::Table(PathBuf::from(rest)));
        }
        for prefix in ["lfp:", "minimax:"] {
            if let Some(rest) = lower.strip_prefix(prefix) {
                return Ok(Self::Lfp(PathBuf::from(rest)));
            }
        }
        Err(config_err(format!(
            "unknown estimator '{text}' (expected li, mle, hml:<beta>, table:<path>, lfp:<path>)"
        )))
    }

    pub fn label(&self) -> String {
        match self {
            Self::LinearInversion => "linear_inversion".into(),
            Self::Mle => "mle".into(),
            Self::Hml(beta) => format!("hml_{beta}"),
            Self::Table(p) => format!(
                "table_{}",
                p.file_stem().map(|s| s.to_string_lossy()).unwrap_or_default()
            ),
            Self::Lfp(p) => format!(
                "minimax_{}",
                p.file_stem().map(|s| s.to_string_lossy()).unwrap_or_default()
            ),
        }
    }

    /// Materialize the table. File-backed specs carry their own design;
    /// built-ins need `design`.
    pub fn build(&self, design: Option<&ExperimentDesign>) -> Result<TabulatedEstimator, Failure> {
        let need_design =
            || design.cloned().ok_or_else(|| config_err("built-in estimators need --kind and --n"));
        match self {
            Self::LinearInversion => TabulatedEstimator::linear_inversion(&need_design()?)
                .map_err(|e| Failure::Other(e.into())),
            Self::Mle => {
                TabulatedEstimator::mle(&need_design()?).map_err(|e| Failure::Other(e.into()))
            }
            Self::Hml(beta) => TabulatedEstimator::hml(&need_design()?, *beta)
                .map_err(|e| Failure::Other(e.into())),
            Self::Table(path) => {
                let bytes = std::fs::read(path).map_err(|e| config_err(format!(
                    "cannot read estimator table {}: {e}",
                    path.display()
                )))?;
                parse_estimator_table(&bytes).map_err(|e| config_err(e.to_string()))
            }
            Self::Lfp(path) => {
                let bytes = std::fs::read(path).map_err(|e| config_err(format!(
                    "cannot read LFP result {}: {e}",
                    path.display()
                )))?;
                let result = parse_lfp_result(&bytes).map_err(|e| config_err(e.to_string()))?;
                let base = path.parent().unwrap_or(Path::new("."));
                result
                    .load_estimator(base)
                    .map_err(|e| config_err(e.to_string()))
            }
        }
    }
}

/// Build all tables and check that every design matches.
fn build_matching_tables(
    specs: &[EstimatorSpec],
    design: Option<&ExperimentDesign>,
) -> Result<Vec<(String, TabulatedEstimator)>, Failure> {
    let mut tables: Vec<(String, TabulatedEstimator)> = Vec::new();
    // File-backed designs take precedence as the reference design.
    let mut reference: Option<ExperimentDesign> = design.cloned();
    for spec in specs {
        if matches!(spec, EstimatorSpec::Table(_) | EstimatorSpec::Lfp(_)) {
            let t = spec.build(None)?;
            match &reference {
                None => reference = Some(t.design().clone()),
                Some(r) if r != t.design() => {
                    return Err(config_err(format!(
                        "design mismatch: estimator '{}' was tabulated for a different design",
                        spec.label()
                    )))
                }
                _ => {}
            }
            tables.push((spec.label(), t));
        }
    }
    for spec in specs {
        if !matches!(spec, EstimatorSpec::Table(_) | EstimatorSpec::Lfp(_)) {
            let t = spec.build(reference.as_ref())?;
            tables.push((spec.label(), t));
        }
    }
    // Restore the caller's ordering.
    let mut ordered = Vec::with_capacity(specs.len());
    for spec in specs {
        let label = spec.label();
        let pos = tables
            .iter()
            .position(|(l, _)| *l == label)
            .expect("table was built");
        ordered.push(tables.remove(pos));
    }
    Ok(ordered)
}

// ---------------------------------------------------------------------------
// compute-lfp
// ---------------------------------------------------------------------------

pub struct ComputeLfpOpts {
    pub kind: Kind,
    pub total_samples: u64,
    pub algorithm: String,
    pub seed: Option<u64>,
    pub resume: Option<PathBuf>,
    pub out_prefix: PathBuf,
    pub embed_table: bool,
}

pub fn cmd_compute_lfp(opts: &ComputeLfpOpts, resolved: &Resolved) -> Result<(), Failure> {
    let design = default_design(opts.kind, opts.total_samples)?;
    let mut config = resolved.lfp_config();
    match opts.algorithm.as_str() {
        "mc" => {
            config.seed = opts
                .seed
                .ok_or_else(|| config_err("--seed is mandatory for the stochastic solver"))?;
        }
        "kempthorne" => {
            if let Some(seed) = opts.seed {
                config.seed = seed;
            }
        }
        other => return Err(config_err(format!("unknown algorithm '{other}'"))),
    }

    let resume_prior = match &opts.resume {
        Some(path) => {
            let bytes = std::fs::read(path)
                .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
            let file = parse_lfp_result(&bytes).map_err(|e| config_err(e.to_string()))?;
            if file.prior.kind() != opts.kind {
                return Err(config_err("resume checkpoint has a different state kind"));
            }
            Some(file.prior)
        }
        None => None,
    };

    let started = std::time::Instant::now();
    let outcome = match opts.algorithm.as_str() {
        "mc" => match &resume_prior {
            Some(p) => mc_lfp_resumed(&design, &config, p),
            None => mc_lfp(&design, &config),
        },
        _ => kempthorne_lfp(&design, resume_prior.as_ref(), &config),
    };

    let (result, converged) = match outcome {
        Ok(r) => (r, true),
        Err(LfpError::IterationLimit { best, .. }) => (*best, false),
        Err(e) => return Err(Failure::Other(anyhow::anyhow!(e.to_string()))),
    };

    write_lfp_artifacts(&result, &config, opts)?;
    print_lfp_summary(&result, &design, started.elapsed().as_secs_f64());
    if converged {
        Ok(())
    } else {
        Err(Failure::NonConvergence(format!(
            "gap {:.3e} above tolerance {:.1e}; artifacts written to {}.*",
            result.gap,
            config.tol,
            opts.out_prefix.display()
        )))
    }
}

fn write_lfp_artifacts(
    result: &LfpResult,
    config: &LfpConfig,
    opts: &ComputeLfpOpts,
) -> Result<(), Failure> {
    let prefix = &opts.out_prefix;
    if let Some(parent) = prefix.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Failure::Other(e.into()))?;
        }
    }
    let table_path = prefix.with_extension("estimator.json");
    let estimator_ref = if opts.embed_table {
        EstimatorRef::Inline(Box::new(result.estimator.clone()))
    } else {
        write_json_atomic(&table_path, &result.estimator)
            .map_err(|e| Failure::Other(e.into()))?;
        EstimatorRef::Path {
            path: table_path
                .file_name()
                .expect("table path has a file name")
                .to_string_lossy()
                .into_owned(),
        }
    };
    let file = LfpResultFile::new(result, config, estimator_ref);
    write_json_atomic(&prefix.with_extension("lfp.json"), &file)
        .map_err(|e| Failure::Other(e.into()))?;

    let mut summary = String::new();
    let _ = writeln!(summary, "algorithm:     {}", result.algorithm);
    let _ = writeln!(summary, "converged:     {}", result.converged);
    let _ = writeln!(summary, "av_risk:       {:.12e}  (lower bound)", result.av_risk);
    let _ = writeln!(summary, "max_risk:      {:.12e}  (upper bound)", result.max_risk);
    let _ = writeln!(summary, "relative gap:  {:.3e}", result.gap);
    let _ = writeln!(summary, "supports:      {}", result.prior.len());
    let _ = writeln!(summary, "iterations:    {}", result.iterations);
    let _ = writeln!(summary, "wall time [s]: {:.2}", result.wall_time_s);
    write_atomic(&prefix.with_extension("summary.txt"), summary.as_bytes())
        .map_err(|e| Failure::Other(e.into()))?;
    Ok(())
}

fn print_lfp_summary(result: &LfpResult, design: &ExperimentDesign, elapsed: f64) {
    println!(
        "{} N={} ({:?}): av_risk {:.6e} <= minimax <= max_risk {:.6e} (gap {:.3e}, {} supports, {} iterations, {:.1}s)",
        result.algorithm,
        design.total_shots(),
        design.kind(),
        result.av_risk,
        result.max_risk,
        result.gap,
        result.prior.len(),
        result.iterations,
        elapsed,
    );
}

// ---------------------------------------------------------------------------
// estimator-grid
// ---------------------------------------------------------------------------

pub struct EstimatorGridOpts {
    pub spec: EstimatorSpec,
    pub shots_per_basis: Option<u32>,
    pub out: PathBuf,
    pub csv: Option<PathBuf>,
}

pub fn cmd_estimator_grid(opts: &EstimatorGridOpts) -> Result<(), Failure> {
    let design = opts
        .shots_per_basis
        .map(ExperimentDesign::rebit_default);
    let table = opts.spec.build(design.as_ref())?;
    if table.design().kind() != Kind::Rebit {
        return Err(config_err(
            "estimator grids are only defined for rebit tables (no 2-D embedding for qubits)",
        ));
    }
    let geometry = estimator_grid(&table).map_err(config_err)?;

    let mut canvas = Canvas::new(640.0, 640.0, (-1.55, 1.55), (-1.55, 1.55));
    canvas.circle(0.0, 0.0, 1.0, "#202020", 1.5);
    for n in 0..=geometry.shots() {
        canvas.polyline(&geometry.row(n), "#c0392b", 0.9);
        canvas.polyline(&geometry.column(n), "#c0392b", 0.9);
    }
    for n_x in 0..=geometry.shots() {
        for n_y in 0..=geometry.shots() {
            let v = geometry.vertex(n_x, n_y);
            canvas.dot(v[0], v[1], 1.2, "#7b241c");
        }
    }
    canvas.text(-1.5, 1.42, 14.0, table.provenance());
    write_atomic(&opts.out, canvas.finish().as_bytes()).map_err(|e| Failure::Other(e.into()))?;
    if let Some(csv_path) = &opts.csv {
        write_atomic(csv_path, estimator_to_csv(&table).as_bytes())
            .map_err(|e| Failure::Other(e.into()))?;
        println!("wrote {}", csv_path.display());
    }
    println!(
        "wrote {} ({}x{} grid, max |r| = {:.4}, boundary spacing variance {:.4e})",
        opts.out.display(),
        geometry.side(),
        geometry.side(),
        geometry.max_vertex_norm(),
        geometry.boundary_spacing_variance()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// risk-profile
// ---------------------------------------------------------------------------

pub struct RiskProfileOpts {
    pub specs: Vec<EstimatorSpec>,
    pub kind: Option<Kind>,
    pub total_samples: Option<u64>,
    pub axis_degrees: f64,
    pub points: usize,
    pub out: PathBuf,
    pub svg: Option<PathBuf>,
}

pub fn cmd_risk_profile(opts: &RiskProfileOpts) -> Result<(), Failure> {
    if opts.specs.is_empty() {
        return Err(config_err("at least one estimator is required"));
    }
    let design = match (opts.kind, opts.total_samples) {
        (Some(kind), Some(n)) => Some(default_design(kind, n)?),
        (None, None) => None,
        _ => return Err(config_err("--kind and --n must be given together")),
    };
    let tables = build_matching_tables(&opts.specs, design.as_ref())?;

    let theta = opts.axis_degrees.to_radians();
    let axis = match tables[0].1.design().kind() {
        Kind::Rebit => Axis::in_plane(theta),
        Kind::Qubit => Axis::new([theta.cos(), theta.sin(), 0.0])
            .map_err(|e| Failure::Other(anyhow::anyhow!(e.to_string())))?,
    };

    let mut profiles = Vec::new();
    for (label, table) in &tables {
        let evaluator = RiskEvaluator::new(table);
        profiles.push((label.clone(), evaluator.profile(&axis, opts.points)));
    }

    let mut csv = String::from("radius");
    for (label, _) in &profiles {
        let _ = write!(csv, ",{label}");
    }
    csv.push('\n');
    for i in 0..opts.points {
        let _ = write!(csv, "{}", fmt_f64(profiles[0].1[i].0));
        for (_, profile) in &profiles {
            let _ = write!(csv, ",{}", fmt_f64(profile[i].1));
        }
        csv.push('\n');
    }
    write_atomic(&opts.out, csv.as_bytes()).map_err(|e| Failure::Other(e.into()))?;
    println!("wrote {} ({} estimators x {} radii)", opts.out.display(), profiles.len(), opts.points);

    if let Some(svg_path) = &opts.svg {
        let finite_max = profiles
            .iter()
            .flat_map(|(_, p)| p.iter().map(|(_, r)| *r))
            .filter(|r| r.is_finite())
            .fold(0.0f64, f64::max)
            .max(1e-12);
        let mut canvas = Canvas::new(720.0, 480.0, (-0.08, 1.05), (-0.18 * finite_max, 1.12 * finite_max));
        canvas.line([0.0, 0.0], [1.0, 0.0], "#202020", 1.0);
        canvas.line([0.0, 0.0], [0.0, finite_max], "#202020", 1.0);
        canvas.text(0.98, -0.1 * finite_max, 12.0, "1");
        canvas.text(-0.06, finite_max, 12.0, &format!("{finite_max:.3e}"));
        let palette = ["#1f618d", "#c0392b", "#1e8449", "#9a7d0a", "#6c3483", "#717d7e"];
        for (i, (label, profile)) in profiles.iter().enumerate() {
            let pts: Vec<[f64; 2]> = profile
                .iter()
                .filter(|(_, r)| r.is_finite())
                .map(|(t, r)| [*t, *r])
                .collect();
            canvas.polyline(&pts, palette[i % palette.len()], 1.4);
            canvas.text(0.02, finite_max * (1.06 - 0.06 * i as f64), 12.0, label);
        }
        write_atomic(svg_path, canvas.finish().as_bytes())
            .map_err(|e| Failure::Other(e.into()))?;
        println!("wrote {}", svg_path.display());
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// bounds-table
// ---------------------------------------------------------------------------

pub struct BoundsTableOpts {
    pub n_list: Vec<u64>,
    pub beta_bar: f64,
    pub out: PathBuf,
}

pub fn cmd_bounds_table(opts: &BoundsTableOpts) -> Result<(), Failure> {
    if opts.n_list.is_empty() {
        return Err(config_err("--n-list must not be empty"));
    }
    if opts.n_list.iter().any(|&n| n < 2) {
        return Err(config_err("bounds need N >= 2 (the Haar bound diverges below)"));
    }
    let mut csv = String::from(
        "N,bound_pauli_D2,bound_pauli_D3,bound_noisycoin,bound_haar,classical_reference\n",
    );
    for &n in &opts.n_list {
        let _ = writeln!(
            csv,
            "{n},{},{},{},{},{}",
            fmt_f64(bound_pauli(n, 2)),
            fmt_f64(bound_pauli(n, 3)),
            fmt_f64(bound_noisy_coin(n, opts.beta_bar)),
            fmt_f64(bound_haar(n)),
            fmt_f64(classical_coin_reference(n)),
        );
    }
    write_atomic(&opts.out, csv.as_bytes()).map_err(|e| Failure::Other(e.into()))?;
    println!("wrote {} ({} rows)", opts.out.display(), opts.n_list.len());
    Ok(())
}

// ---------------------------------------------------------------------------
// compare
// ---------------------------------------------------------------------------

pub struct CompareOpts {
    pub specs: Vec<EstimatorSpec>,
    pub kind: Kind,
    pub n_list: Vec<u64>,
    pub out: PathBuf,
    pub search: SearchConfig,
}

pub fn cmd_compare(opts: &CompareOpts) -> Result<(), Failure> {
    if opts.specs.is_empty() || opts.n_list.is_empty() {
        return Err(config_err("compare needs estimators and an N list"));
    }
    let mut csv = String::from("N,estimator,max_risk,argmax_radius,is_best_hml\n");
    for &n in &opts.n_list {
        let design = default_design(opts.kind, n)?;
        let mut rows: Vec<(String, f64, f64, bool)> = Vec::new();
        for spec in &opts.specs {
            let table = spec.build(Some(&design))?;
            if table.design() != &design {
                return Err(config_err(format!(
                    "estimator '{}' does not match the N={n} {:?} design",
                    spec.label(),
                    opts.kind
                )));
            }
            let evaluator = RiskEvaluator::new(&table);
            let (value, argmax) = evaluator.max(&opts.search);
            rows.push((
                spec.label(),
                value,
                argmax.radius(),
                matches!(spec, EstimatorSpec::Hml(_)),
            ));
        }
        let best_hml = rows
            .iter()
            .filter(|r| r.3 && r.1.is_finite())
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .map(|r| r.0.clone());
        for (label, value, radius, is_hml) in rows {
            let flag = is_hml && best_hml.as_deref() == Some(label.as_str());
            let _ = writeln!(
                csv,
                "{n},{label},{},{},{}",
                fmt_f64(value),
                fmt_f64(radius),
                u8::from(flag)
            );
            println!("N={n} {label}: max_risk = {}", fmt_f64(value));
        }
        if let Some(best) = best_hml {
            println!("N={n}: hedged estimator minimizing max risk: {best}");
        }
    }
    write_atomic(&opts.out, csv.as_bytes()).map_err(|e| Failure::Other(e.into()))?;
    println!("wrote {}", opts.out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// noisy-coin
// ---------------------------------------------------------------------------

pub struct CoinLfpOpts {
    pub alpha: f64,
    pub trials: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

pub fn cmd_coin_lfp(opts: &CoinLfpOpts, resolved: &Resolved) -> Result<(), Failure> {
    let model = build_coin(opts.alpha, opts.trials)?;
    let config = CoinLfpConfig {
        seed: opts.seed,
        ..resolved.coin_config()
    };
    let result = coin_mc_lfp(&model, &config).map_err(|e| Failure::Other(anyhow::anyhow!(e.to_string())))?;
    println!(
        "noisy coin alpha={} N={}: av_risk {:.6e} <= minimax <= max_risk {:.6e} (gap {:.3e}, {} supports)",
        opts.alpha,
        opts.trials,
        result.av_risk,
        result.max_risk,
        result.gap,
        result.supports.len()
    );
    if let Some(path) = &opts.out {
        write_json_atomic(path, &result).map_err(|e| Failure::Other(e.into()))?;
        println!("wrote {}", path.display());
    }
    if result.converged {
        Ok(())
    } else {
        Err(Failure::NonConvergence(format!("gap {:.3e}", result.gap)))
    }
}

pub struct CoinScalingOpts {
    pub alpha: f64,
    pub n_list: Vec<usize>,
    pub seed: u64,
    pub out: PathBuf,
}

pub fn cmd_coin_scaling(opts: &CoinScalingOpts, resolved: &Resolved) -> Result<(), Failure> {
    if opts.n_list.is_empty() {
        return Err(config_err("--n-list must not be empty"));
    }
    let mut csv = String::from("N,av_risk,max_risk,midpoint,analytic_bound\n");
    let mut fit_points = Vec::new();
    let mut all_converged = true;
    for &n in &opts.n_list {
        let model = build_coin(opts.alpha, n)?;
        let config = CoinLfpConfig {
            seed: opts.seed,
            ..resolved.coin_config()
        };
        let result =
            coin_mc_lfp(&model, &config).map_err(|e| Failure::Other(anyhow::anyhow!(e.to_string())))?;
        all_converged &= result.converged;
        let midpoint = 0.5 * (result.av_risk + result.max_risk);
        let bound = if opts.alpha > 0.0 {
            bound_noisy_coin(n as u64, tomomax::experiment::resolution(opts.alpha))
        } else {
            classical_coin_reference(n as u64)
        };
        let _ = writeln!(
            csv,
            "{n},{},{},{},{}",
            fmt_f64(result.av_risk),
            fmt_f64(result.max_risk),
            fmt_f64(midpoint),
            fmt_f64(bound),
        );
        fit_points.push(((n as f64).ln(), midpoint.ln()));
        println!(
            "N={n}: [{:.6e}, {:.6e}] gap {:.3e}{}",
            result.av_risk,
            result.max_risk,
            result.gap,
            if result.converged { "" } else { "  (not converged)" }
        );
    }
    write_atomic(&opts.out, csv.as_bytes()).map_err(|e| Failure::Other(e.into()))?;
    if fit_points.len() >= 2 {
        println!(
            "log-log slope of certificate midpoints: {:.4}",
            linear_fit_slope(&fit_points)
        );
    }
    println!("wrote {}", opts.out.display());
    if all_converged {
        Ok(())
    } else {
        Err(Failure::NonConvergence("some N did not converge".into()))
    }
}

pub struct CoinBimodalOpts {
    pub alpha: f64,
    pub trials: usize,
    pub p1: Option<f64>,
    pub out: Option<PathBuf>,
}

pub fn cmd_coin_bimodal(opts: &CoinBimodalOpts) -> Result<(), Failure> {
    let model = build_coin(opts.alpha, opts.trials)?;
    let beta_bar = if opts.alpha > 0.0 {
        tomomax::experiment::resolution(opts.alpha)
    } else {
        return Err(config_err("the bimodal construction needs alpha > 0"));
    };
    let prior = match opts.p1 {
        Some(p1) => BimodalPrior::new(0.0, p1).map_err(config_err)?,
        None => BimodalPrior::matched(beta_bar, opts.trials).map_err(config_err)?,
    };
    let risk_at_zero = bimodal_pointwise_risk(&model, &prior, 0.0).map_err(config_err)?;
    let risk_at_p1 = bimodal_pointwise_risk(&model, &prior, prior.p1).map_err(config_err)?;
    let bayes = bimodal_bayes_risk(&model, &prior).map_err(config_err)?;
    let bound = bound_noisy_coin(opts.trials as u64, beta_bar);
    println!("bimodal prior p0 = 0, p1 = {}", fmt_f64(prior.p1));
    println!("pointwise risk at p0: {}", fmt_f64(risk_at_zero));
    println!("pointwise risk at p1: {}", fmt_f64(risk_at_p1));
    println!("bayes risk:           {}", fmt_f64(bayes));
    println!("analytic lower bound: {}", fmt_f64(bound));
    if let Some(path) = &opts.out {
        #[derive(serde::Serialize)]
        struct Report {
            alpha: f64,
            trials: usize,
            p1: f64,
            risk_at_p0: f64,
            risk_at_p1: f64,
            bayes_risk: f64,
            analytic_bound: f64,
        }
        write_json_atomic(
            path,
            &Report {
                alpha: opts.alpha,
                trials: opts.trials,
                p1: prior.p1,
                risk_at_p0: risk_at_zero,
                risk_at_p1,
                bayes_risk: bayes,
                analytic_bound: bound,
            },
        )
        .map_err(|e| Failure::Other(e.into()))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn build_coin(alpha: f64, trials: usize) -> Result<NoisyCoinModel, Failure> {
    NoisyCoinModel::uniform(alpha, trials).map_err(config_err)
}

