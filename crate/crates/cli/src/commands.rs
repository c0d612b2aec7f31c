use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use sparsebump::analysis::{
    direct_bump_table, dual_exponent, entropy_bump_table, plain_ap, testing_constants_with_tables, BumpFunction,
    ConstantReport, Direction,
};
use sparsebump::ensemble::{run_sweep, SweepGrid};
use sparsebump::lattice::{Cube, ModelFile, WeightedModel};
use sparsebump::operator::{estimate_dual_norm, estimate_norm, AscentOptions, NormChoice, NormEstimate, NormOptions};
use sparsebump::search::{depth_ladder, extremal_search, SearchConfig, SearchResult};
use sparsebump::sparse::{generate_sparse, verify_sparse, BranchingProfile, SparseFamily, SparseReport};
use sparsebump::theorems::{
    plain_ap_with_norm, sawyer_with_norms, structural_reports, theorem1_with_norm, theorem2_with_norm, write_jsonl,
    Inequality, VerificationReport,
};
use sparsebump::weights::{generate_model_capped, WeightLaw};

use crate::config::RunConfig;
use crate::{InputArgs, VERSION};

#[derive(Debug, Serialize, Deserialize)]
struct RunHeader {
    version: String,
    config: serde_json::Value,
}

fn header(cfg: &RunConfig) -> Result<RunHeader> {
    Ok(RunHeader { version: VERSION.to_string(), config: serde_json::to_value(cfg)? })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn out_dir(cfg: &RunConfig) -> Result<&Path> {
    fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    Ok(&cfg.out)
}

/// Provenance for artifacts whose own format has no room for it (CSV, JSON lines).
fn write_run_header(cfg: &RunConfig) -> Result<()> {
    write_json(&out_dir(cfg)?.join("run.json"), &header(cfg)?)
}

fn norm_options(cfg: &RunConfig) -> Result<NormOptions> {
    let method: NormChoice = cfg.norm_method.parse()?;
    Ok(NormOptions {
        method,
        ascent: AscentOptions { seed: cfg.seed, ..AscentOptions::default() },
        ..NormOptions::default()
    })
}

fn write_model(path: &Path, model: &WeightedModel, cfg: &RunConfig) -> Result<()> {
    let mut file: ModelFile = model.to_file();
    file.meta = Some(serde_json::to_value(header(cfg)?)?);
    write_json(path, &file)
}

fn write_family(path: &Path, family: &SparseFamily) -> Result<()> {
    let mut text = family.to_json()?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn gen(cfg: &RunConfig) -> Result<bool> {
    let law: WeightLaw = cfg.law.parse()?;
    let profile: BranchingProfile = cfg.profile.parse()?;
    let model = generate_model_capped(cfg.depth, cfg.seed, law, cfg.max_depth)?;
    let family = generate_sparse(cfg.depth, cfg.seed, profile);
    let dir = out_dir(cfg)?;
    write_model(&dir.join("model.json"), &model, cfg)?;
    write_family(&dir.join("family.json"), &family)?;
    println!(
        "wrote {} ({} cells) and {} ({} cubes)",
        dir.join("model.json").display(),
        model.cells(),
        dir.join("family.json").display(),
        family.len()
    );
    Ok(true)
}

/// Loads the model and family; the returned config carries the model's depth.
fn load_inputs(cfg: &RunConfig, input: &InputArgs) -> Result<(RunConfig, WeightedModel, SparseFamily)> {
    let (cfg, model, family) = load_unchecked(cfg, input)?;
    let report = verify_sparse(&family);
    if !report.ok {
        bail!("family is not sparse: {}", sparse_failure(&report));
    }
    Ok((cfg, model, family))
}

/// As [`load_inputs`] but leaves the sparseness check to the caller.
fn load_unchecked(cfg: &RunConfig, input: &InputArgs) -> Result<(RunConfig, WeightedModel, SparseFamily)> {
    let model_path = input.model.clone().unwrap_or_else(|| cfg.out.join("model.json"));
    let family_path = input.family.clone().unwrap_or_else(|| cfg.out.join("family.json"));
    let text = fs::read_to_string(&model_path).with_context(|| format!("reading {}", model_path.display()))?;
    let model =
        WeightedModel::from_json(&text, cfg.max_depth).with_context(|| format!("loading {}", model_path.display()))?;
    let text = fs::read_to_string(&family_path).with_context(|| format!("reading {}", family_path.display()))?;
    let cubes: Vec<Cube> = serde_json::from_str(&text).with_context(|| format!("parsing {}", family_path.display()))?;
    let family =
        SparseFamily::from_cubes(model.depth(), cubes).with_context(|| format!("loading {}", family_path.display()))?;
    let cfg = RunConfig { depth: model.depth(), ..cfg.clone() };
    Ok((cfg, model, family))
}

fn sparse_failure(report: &SparseReport) -> String {
    let worst = report.worst.unwrap_or(Cube::ROOT);
    format!("members strictly inside {worst} cover a fraction {} > 1/2", report.worst_fraction)
}

/// Contents of `constants.json`.
#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct ConstantsFile {
    pub version: String,
    pub config: serde_json::Value,
    pub p: f64,
    pub p_dual: f64,
    pub delta: f64,
    pub entropy_w_sigma: ConstantReport,
    pub entropy_sigma_w: ConstantReport,
    pub direct_w_sigma: ConstantReport,
    pub direct_sigma_w: ConstantReport,
    pub plain_ap_w_sigma: ConstantReport,
    pub plain_ap_sigma_w: ConstantReport,
    pub t1: ConstantReport,
    pub t2: ConstantReport,
}

pub fn constants(cfg: &RunConfig, input: &InputArgs, tables: bool) -> Result<bool> {
    let (cfg, model, family) = load_inputs(cfg, input)?;
    let cfg = &cfg;
    let (p, delta) = (cfg.p, cfg.delta);
    let pd = dual_exponent(p);
    let ent_ws = entropy_bump_table(&model, p, &BumpFunction::entropy(p, delta)?, Direction::WSigma)?;
    let ent_sw = entropy_bump_table(&model, p, &BumpFunction::entropy(pd, delta)?, Direction::SigmaW)?;
    let dir_ws = direct_bump_table(&model, p, &BumpFunction::direct(p, delta)?, Direction::WSigma)?;
    let dir_sw = direct_bump_table(&model, p, &BumpFunction::direct(pd, delta)?, Direction::SigmaW)?;
    let (t1, t2) = testing_constants_with_tables(&model, &family, p, tables)?;
    let file = ConstantsFile {
        version: VERSION.to_string(),
        config: serde_json::to_value(cfg)?,
        p,
        p_dual: pd,
        delta,
        entropy_w_sigma: ConstantReport::from_table(&ent_ws, tables),
        entropy_sigma_w: ConstantReport::from_table(&ent_sw, tables),
        direct_w_sigma: ConstantReport::from_table(&dir_ws, tables),
        direct_sigma_w: ConstantReport::from_table(&dir_sw, tables),
        plain_ap_w_sigma: plain_ap(&model, p, Direction::WSigma)?,
        plain_ap_sigma_w: plain_ap(&model, p, Direction::SigmaW)?,
        t1,
        t2,
    };
    let dir = out_dir(cfg)?;
    if tables {
        for (name, report) in [
            ("entropy_w_sigma", &file.entropy_w_sigma),
            ("entropy_sigma_w", &file.entropy_sigma_w),
            ("direct_w_sigma", &file.direct_w_sigma),
            ("direct_sigma_w", &file.direct_sigma_w),
            ("t1", &file.t1),
            ("t2", &file.t2),
        ] {
            let path = dir.join(format!("{name}.csv"));
            report.write_csv(BufWriter::new(fs::File::create(&path)?))?;
        }
    }
    let summary = ConstantsFile {
        entropy_w_sigma: strip(&file.entropy_w_sigma),
        entropy_sigma_w: strip(&file.entropy_sigma_w),
        direct_w_sigma: strip(&file.direct_w_sigma),
        direct_sigma_w: strip(&file.direct_sigma_w),
        t1: strip(&file.t1),
        t2: strip(&file.t2),
        ..file
    };
    write_json(&dir.join("constants.json"), &summary)?;
    for (name, r) in [
        ("[w,σ]_{p,ε}", &summary.entropy_w_sigma),
        ("[σ,w]_{p',ε}", &summary.entropy_sigma_w),
        ("[[w,σ]]_{p,α}", &summary.direct_w_sigma),
        ("[[σ,w]]_{p',α}", &summary.direct_sigma_w),
        ("[w,σ]_p", &summary.plain_ap_w_sigma),
        ("[σ,w]_p'", &summary.plain_ap_sigma_w),
        ("T1", &summary.t1),
        ("T2", &summary.t2),
    ] {
        println!("{name:>16} = {:<24} at level {} index {}", r.value, r.witness.level, r.witness.index);
    }
    Ok(true)
}

fn strip(r: &ConstantReport) -> ConstantReport {
    ConstantReport { table: None, ..r.clone() }
}

#[derive(Debug, Serialize)]
struct NormFile {
    version: String,
    config: serde_json::Value,
    p: f64,
    primal: NormEstimate,
    dual: NormEstimate,
}

pub fn norm(cfg: &RunConfig, input: &InputArgs) -> Result<bool> {
    let (cfg, model, family) = load_inputs(cfg, input)?;
    let cfg = &cfg;
    let opts = norm_options(cfg)?;
    let primal = estimate_norm(&model, &family, cfg.p, &opts)?;
    let dual = estimate_dual_norm(&model, &family, cfg.p, &opts)?;
    println!("norm      = {} ({:?}, residual {:e})", primal.value, primal.method, primal.certificate.residual);
    println!("dual norm = {} ({:?}, residual {:e})", dual.value, dual.method, dual.certificate.residual);
    let converged = primal.certificate.converged && dual.certificate.converged;
    if !converged {
        eprintln!("warning: norm estimation did not converge");
    }
    let file = NormFile { version: VERSION.to_string(), config: serde_json::to_value(cfg)?, p: cfg.p, primal, dual };
    write_json(&out_dir(cfg)?.join("norm.json"), &file)?;
    Ok(true)
}

fn report_line(r: &VerificationReport) -> String {
    let status = if r.holds { "PASS" } else { "FAIL" };
    let bound = r.bound.map(|b| format!(" (bound {b})")).unwrap_or_default();
    format!("{status} {:<18} lhs={:<22} rhs={:<22} ratio={}{bound}", r.name.name(), r.lhs, r.rhs, r.ratio)
}

pub fn verify(cfg: &RunConfig, input: &InputArgs, which: &[String]) -> Result<bool> {
    let (cfg, model, family) = load_unchecked(cfg, input)?;
    let cfg = &cfg;
    let sparse = verify_sparse(&family);
    if !sparse.ok {
        write_run_header(cfg)?;
        fs::write(cfg.out.join("reports.jsonl"), "")?;
        eprintln!("FAIL sparseness        {}", sparse_failure(&sparse));
        return Ok(false);
    }
    let selected: Vec<Inequality> = if which.is_empty() {
        Inequality::ALL.to_vec()
    } else {
        which.iter().map(|w| w.parse()).collect::<std::result::Result<_, _>>()?
    };
    let wants = |i: Inequality| selected.contains(&i);
    let opts = norm_options(cfg)?;
    let (p, delta) = (cfg.p, cfg.delta);
    let mut reports = Vec::new();
    let needs_norm =
        [Inequality::Sawyer, Inequality::Theorem1, Inequality::Theorem2, Inequality::PlainAp].into_iter().any(wants);
    let norm = if needs_norm { Some(estimate_norm(&model, &family, p, &opts)?.value) } else { None };
    if wants(Inequality::Sawyer) {
        let dual = estimate_dual_norm(&model, &family, p, &opts)?.value;
        reports.push(sawyer_with_norms(&model, &family, p, norm.unwrap(), dual)?);
    }
    if [Inequality::Hytonen, Inequality::NestedExpansion, Inequality::StoppingEstimate].into_iter().any(wants) {
        reports.extend(structural_reports(&model, &family, p)?.into_iter().filter(|r| wants(r.name)).map(|mut r| {
            r.params.p = p;
            r
        }));
    }
    if wants(Inequality::Theorem1) {
        reports.push(theorem1_with_norm(&model, &family, p, delta, norm.unwrap())?);
    }
    if wants(Inequality::Theorem2) {
        reports.push(theorem2_with_norm(&model, &family, p, delta, norm.unwrap())?);
    }
    if wants(Inequality::PlainAp) {
        reports.push(plain_ap_with_norm(&model, p, norm.unwrap())?);
    }
    let reports: Vec<VerificationReport> = reports.into_iter().map(|r| r.with_seed(cfg.seed)).collect();
    write_run_header(cfg)?;
    write_jsonl(&reports, BufWriter::new(fs::File::create(cfg.out.join("reports.jsonl"))?))?;
    for r in &reports {
        let line = report_line(r);
        if r.holds {
            println!("{line}");
        } else {
            eprintln!("{line}");
        }
    }
    Ok(reports.iter().all(|r| r.holds))
}

fn search_config(cfg: &RunConfig) -> Result<SearchConfig> {
    let s = &cfg.search;
    let d = SearchConfig::default();
    let config = SearchConfig {
        objective: s.objective.as_deref().map(str::parse).transpose()?.unwrap_or(d.objective),
        p: cfg.p,
        delta: cfg.delta,
        depth: cfg.depth,
        iterations: s.iterations.unwrap_or(d.iterations),
        seed: cfg.seed,
        proposal: s.proposal.as_deref().map(str::parse).transpose()?.unwrap_or(d.proposal),
        temperature: s.temperature.unwrap_or(d.temperature),
        cooling: s.cooling.unwrap_or(d.cooling),
        step: s.step.unwrap_or(d.step),
        family_mutation_rate: s.mutation_rate.unwrap_or(d.family_mutation_rate),
        log2_bound: s.log2_bound.or(d.log2_bound),
        chains: s.chains.unwrap_or(d.chains),
        ..d
    };
    config.validate()?;
    Ok(config)
}

#[derive(Debug, Serialize)]
struct SearchFile<'a> {
    version: String,
    config: serde_json::Value,
    search: &'a SearchConfig,
    depth: u32,
    best_ratio: f64,
    rejected: usize,
    infeasible: usize,
}

fn write_search_result(cfg: &RunConfig, search: &SearchConfig, dir: &Path, result: &SearchResult) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_model(&dir.join("best_model.json"), &result.best_model, cfg)?;
    write_family(&dir.join("best_family.json"), &result.best_family)?;
    result.write_trace_csv(BufWriter::new(fs::File::create(dir.join("trace.csv"))?))?;
    write_json(
        &dir.join("search.json"),
        &SearchFile {
            version: VERSION.to_string(),
            config: serde_json::to_value(cfg)?,
            search,
            depth: result.best_model.depth(),
            best_ratio: result.best_ratio,
            rejected: result.rejected,
            infeasible: result.infeasible,
        },
    )
}

pub fn search(cfg: &RunConfig) -> Result<bool> {
    let search = search_config(cfg)?;
    let dir = out_dir(cfg)?.to_path_buf();
    match cfg.search.ladder_to {
        Some(top) if top > cfg.depth => {
            anyhow::ensure!(top <= cfg.max_depth, "ladder depth {top} exceeds the cap {}", cfg.max_depth);
            let results = depth_ladder(&search, cfg.depth..=top)?;
            let mut csv = String::from("depth,best_ratio\n");
            for r in &results {
                let depth = r.best_model.depth();
                csv.push_str(&format!("{depth},{}\n", r.best_ratio));
                let sub: PathBuf = dir.join(format!("depth_{depth}"));
                write_search_result(cfg, &SearchConfig { depth, ..search.clone() }, &sub, r)?;
                println!("depth {depth}: best ratio {}", r.best_ratio);
            }
            fs::write(dir.join("ladder.csv"), csv)?;
        }
        _ => {
            let result = extremal_search(&search)?;
            write_search_result(cfg, &search, &dir, &result)?;
            println!(
                "best ratio {} ({} rejected, {} infeasible)",
                result.best_ratio, result.rejected, result.infeasible
            );
        }
    }
    Ok(true)
}

pub fn sweep(cfg: &RunConfig) -> Result<bool> {
    let d = SweepGrid::default();
    let s = &cfg.sweep;
    let grid = SweepGrid {
        depths: s.depths.clone().unwrap_or(d.depths),
        ps: s.ps.clone().unwrap_or(d.ps),
        deltas: s.deltas.clone().unwrap_or(d.deltas),
        seeds: s.seeds.unwrap_or(d.seeds),
        first_seed: cfg.seed,
    };
    if let Some(&deep) = grid.depths.iter().find(|&&x| x > cfg.max_depth || x < 1) {
        anyhow::bail!("sweep depth {deep} outside 1..={}", cfg.max_depth);
    }
    let outcome = run_sweep(&grid, cfg.law.parse()?, cfg.profile.parse()?, &norm_options(cfg)?)?;
    write_run_header(cfg)?;
    outcome.write_csv(BufWriter::new(fs::File::create(cfg.out.join("summary.csv"))?))?;
    write_jsonl(&outcome.reports, BufWriter::new(fs::File::create(cfg.out.join("reports.jsonl"))?))?;
    let failures: Vec<&VerificationReport> = outcome.reports.iter().filter(|r| !r.holds).collect();
    for r in &failures {
        eprintln!("{} seed={:?} depth={}", report_line(r), r.params.seed, r.params.depth);
    }
    println!("{} reports, {} failing", outcome.reports.len(), failures.len());
    Ok(failures.is_empty())
}
