//! The experiment commands. Each one parses its parameters strictly,
//! projects its cost, and produces a summary row, a JSON result and its
//! artifact files.

use anyhow::{anyhow, bail, Result};
use clap::ValueEnum;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use qp2loc::arithmetic::{
    best_dio_constant, counting_envelope, diophantine_check, frac_mult, lattice_points_in_band,
    short_distance_vectors, BandSpec,
};
use qp2loc::green::{
    badset_measure_on_line, classify_with_metric, multiscale_sweep, GoodBadParams, MultiscaleConfig,
    OperatorFamily, PhaseSegment,
};
use qp2loc::levelset::{find_level_segment, fit_alpha, sublevel_measure, MIN_RESOLUTION};
use qp2loc::localization::{
    annulus_scan, annulus_vectors, decay_profile, double_resonance_scan, eigensolve, mid_spectrum_states,
    poisson_check, AnnulusConfig, ResonanceConfig,
};
use qp2loc::operator::{Metric, Region};
use qp2loc::potential::{
    classify_symmetry, g_exact, g_fourier_lower, verify_two_sided, SegmentParams, DEFAULT_SYMMETRY_TOL,
};
use qp2loc::stats::median;
use qp2loc::Error as CoreError;

use crate::config::{parse, split_operator, OperatorInput, PotentialInput, RegionInput};
use crate::output::{csv_named, json_artifact, num, opt_bool, opt_num, svg_heatmap, Artifact};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Symmetry,
    Levelset,
    GreenScan,
    ArithCount,
    Spectrum,
    Decay,
    Poisson,
    DoubleResonance,
    Annulus,
    Multiscale,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::Symmetry => "symmetry",
            Self::Levelset => "levelset",
            Self::GreenScan => "green-scan",
            Self::ArithCount => "arith-count",
            Self::Spectrum => "spectrum",
            Self::Decay => "decay",
            Self::Poisson => "poisson",
            Self::DoubleResonance => "double-resonance",
            Self::Annulus => "annulus",
            Self::Multiscale => "multiscale",
        }
    }

    /// Columns of the one-row summary used by sweeps.
    pub fn summary_columns(self) -> &'static [&'static str] {
        match self {
            Self::Symmetry => &["kind", "theta_sym", "residual_i", "residual_ii"],
            Self::Levelset => &["segments", "min_alpha", "level_segment_found", "search_min"],
            Self::GreenScan => &["points", "bad", "bad_fraction", "line_measure"],
            Self::ArithCount => &["count", "n", "eta", "envelope"],
            Self::Spectrum => &["count", "min", "max"],
            Self::Decay => &["states", "median_raw_rate", "median_rate", "unfit", "target"],
            Self::Poisson => &["pairs", "max_residual"],
            Self::DoubleResonance => &["rows", "mbox_bad", "bad_pairs", "bad_fraction"],
            Self::Annulus => &["radius", "width", "boxes_checked"],
            Self::Multiscale => &["scales", "last_bad_fraction", "last_gamma_fit", "drift_ok"],
        }
    }
}

pub struct Outcome {
    pub summary: Vec<String>,
    pub result: Value,
    pub artifacts: Vec<Artifact>,
}

/// A parsed command with its parameters.
pub enum Job {
    Symmetry(SymmetryCfg),
    Levelset(LevelsetCfg),
    GreenScan(OperatorInput, GreenScanCfg),
    ArithCount(ArithCfg),
    Spectrum(OperatorInput, SpectrumCfg),
    Decay(OperatorInput, DecayCfg),
    Poisson(OperatorInput, PoissonCfg),
    DoubleResonance(OperatorInput, ResonanceCfg),
    Annulus(OperatorInput, AnnulusCfg),
    Multiscale(OperatorInput, MultiscaleCfg),
}

impl Job {
    pub fn parse(cmd: Command, map: &Map<String, Value>) -> Result<Self> {
        let with_op = |what: &str| -> Result<(OperatorInput, Map<String, Value>)> {
            let (op, rest) = split_operator(map);
            Ok((parse(op, &format!("operator settings for {what}"))?, rest))
        };
        let name = cmd.name();
        Ok(match cmd {
            Command::Symmetry => Job::Symmetry(parse(map.clone(), name)?),
            Command::Levelset => Job::Levelset(parse(map.clone(), name)?),
            Command::ArithCount => Job::ArithCount(parse(map.clone(), name)?),
            Command::GreenScan => {
                let (op, rest) = with_op(name)?;
                Job::GreenScan(op, parse(rest, name)?)
            }
            Command::Spectrum => {
                let (op, rest) = with_op(name)?;
                Job::Spectrum(op, parse(rest, name)?)
            }
            Command::Decay => {
                let (op, rest) = with_op(name)?;
                Job::Decay(op, parse(rest, name)?)
            }
            Command::Poisson => {
                let (op, rest) = with_op(name)?;
                Job::Poisson(op, parse(rest, name)?)
            }
            Command::DoubleResonance => {
                let (op, rest) = with_op(name)?;
                Job::DoubleResonance(op, parse(rest, name)?)
            }
            Command::Annulus => {
                let (op, rest) = with_op(name)?;
                Job::Annulus(op, parse(rest, name)?)
            }
            Command::Multiscale => {
                let (op, rest) = with_op(name)?;
                Job::Multiscale(op, parse(rest, name)?)
            }
        })
    }

    /// Projected number of linear solves or eigensolves (lattice
    /// enumerations count one unit per thousand points).
    pub fn estimate(&self) -> Result<f64> {
        Ok(match self {
            Job::Symmetry(_) | Job::Levelset(_) => 0.0,
            Job::ArithCount(c) => (2.0 * c.n as f64 + 1.0).powi(2) / 1000.0,
            Job::Spectrum(..) => 1.0,
            Job::GreenScan(_, c) => (c.grid * c.grid) as f64 + c.line.as_ref().map_or(0.0, |l| l.samples as f64),
            Job::Decay(_, c) => 1.0 + c.count as f64,
            Job::Poisson(_, c) => 1.0 + c.pairs as f64,
            Job::DoubleResonance(_, c) => {
                let ks = annulus_vectors(c.k, c.c1, c.c2).len() as f64;
                2.0 * ks * ((2 * c.m + 1) as f64).powi(2)
            }
            Job::Annulus(_, c) => {
                let nf = c.n as f64;
                let outer = nf.powf(c.r0) + nf.powf(c.r0 / 4.0);
                (2.0 * outer + 1.0).powi(2) * c.translations.len().max(1) as f64
            }
            Job::Multiscale(_, c) => (c.scales.len() * c.boxes) as f64,
        })
    }

    pub fn run(&self, seed: u64) -> Result<Outcome> {
        match self {
            Job::Symmetry(c) => symmetry(c),
            Job::Levelset(c) => levelset(c, seed),
            Job::GreenScan(op, c) => green_scan(op, c, seed),
            Job::ArithCount(c) => arith_count(c, seed),
            Job::Spectrum(op, c) => spectrum(op, c, seed),
            Job::Decay(op, c) => decay(op, c, seed),
            Job::Poisson(op, c) => poisson(op, c, seed),
            Job::DoubleResonance(op, c) => resonance(op, c),
            Job::Annulus(op, c) => annulus(op, c),
            Job::Multiscale(op, c) => multiscale(op, c, seed),
        }
    }
}

fn tol_default() -> f64 {
    DEFAULT_SYMMETRY_TOL
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymmetryCfg {
    #[serde(default)]
    pub potential: PotentialInput,
    #[serde(default = "tol_default")]
    pub tol: f64,
    /// Side of an `(a, b)` grid for the gradient checks; none skips them.
    #[serde(default)]
    pub gradient_grid: Option<usize>,
}

fn symmetry(c: &SymmetryCfg) -> Result<Outcome> {
    if !(c.tol > 0.0) {
        bail!("tol must be positive");
    }
    let v = c.potential.build()?;
    let rep = classify_symmetry(&v, c.tol);
    let kind = format!("{:?}", rep.kind);
    let mut result = json!({
        "kind": kind,
        "theta_sym": rep.theta_sym,
        "residual_i": rep.residual_i,
        "residual_ii": rep.residual_ii,
        "ambiguous": rep.ambiguous,
    });
    let mut artifacts = Vec::new();
    if let Some(m) = c.gradient_grid {
        if m < 2 {
            bail!("gradient_grid must be at least 2");
        }
        let bs: Vec<f64> = (0..m).map(|i| i as f64 / (m - 1) as f64).collect();
        let mut rows = Vec::new();
        let mut min_slack = f64::INFINITY;
        for sign in [-1i32, 1] {
            for &b in &bs {
                let g = g_exact(&v, SegmentParams { a: sign as f64, b });
                let lower = g_fourier_lower(&v, sign, b);
                min_slack = min_slack.min(g - lower);
                rows.push(vec![num(sign as f64), num(b), num(g), num(lower)]);
            }
        }
        artifacts.push(csv_named("gradient.csv", &["a", "b", "g_exact", "fourier_lower"], &rows)?);
        let grid: Vec<(f64, f64)> = (0..m)
            .flat_map(|i| bs.iter().map(move |&b| (-1.0 + 2.0 * i as f64 / (m - 1) as f64, b)))
            .collect();
        result["min_gradient_slack"] = json!(min_slack);
        result["two_sided"] = match verify_two_sided(&v, &grid) {
            Ok(fit) => json!({
                "case": format!("{:?}", fit.case),
                "c_minus": fit.c_minus,
                "c_plus": fit.c_plus,
                "argmin": [fit.argmin.0, fit.argmin.1],
            }),
            Err(e) => json!({ "error": e.to_string() }),
        };
    }
    let summary = vec![kind, opt_num(rep.theta_sym), num(rep.residual_i), num(rep.residual_ii)];
    artifacts.push(json_artifact("result.json", &result)?);
    Ok(Outcome { summary, result, artifacts })
}

fn default_deltas() -> Vec<f64> {
    vec![1e-1, 1e-2, 1e-3, 1e-4, 1e-5]
}
fn default_resolution() -> usize {
    MIN_RESOLUTION
}
fn default_segment_tol() -> f64 {
    1e-12
}
fn four() -> usize {
    4
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelsetCfg {
    #[serde(default)]
    pub potential: PotentialInput,
    /// In units of `w`, i.e. `(E - U_j) / lambda`.
    #[serde(default)]
    pub energy: f64,
    #[serde(default = "default_deltas")]
    pub deltas: Vec<f64>,
    /// Explicit `[a, b]` pairs.
    #[serde(default)]
    pub segments: Vec<[f64; 2]>,
    /// Extra segments drawn from the seed.
    #[serde(default = "four")]
    pub random_segments: usize,
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    #[serde(default = "default_segment_tol")]
    pub segment_tol: f64,
}

fn levelset(c: &LevelsetCfg, seed: u64) -> Result<Outcome> {
    let v = c.potential.build()?;
    let mut segs: Vec<SegmentParams> =
        c.segments.iter().map(|s| SegmentParams::new(s[0], s[1])).collect::<qp2loc::Result<_>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..c.random_segments {
        segs.push(SegmentParams { a: rng.random_range(-1.0..=1.0), b: rng.random_range(0.0..1.0) });
    }
    let mut rows = Vec::new();
    let mut alphas = Vec::new();
    for p in &segs {
        for &d in &c.deltas {
            let r = sublevel_measure(&v, *p, c.energy, d, c.resolution)?;
            rows.push(vec![num(p.a), num(p.b), num(r.offset), num(c.energy), num(d), num(r.measure)]);
        }
        let fit = fit_alpha(&v, *p, c.energy, &c.deltas, c.resolution)?;
        alphas.push(json!({ "a": p.a, "b": p.b, "alpha": fit.alpha, "r2": fit.r2 }));
    }
    let search = find_level_segment(&v, c.energy, c.segment_tol)?;
    let min_alpha = alphas.iter().filter_map(|a| a["alpha"].as_f64()).fold(f64::INFINITY, f64::min);
    let found = !search.segments.is_empty();

    let m = 96;
    let heat: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            let t2 = (i as f64 + 0.5) / m as f64;
            (0..m).map(|j| v.eval((j as f64 + 0.5) / m as f64) + v.eval(t2)).collect()
        })
        .collect();
    let lines: Vec<Vec<(f64, f64)>> = search.segments.iter().flat_map(|s| torus_line(s.params)).collect();
    let mut svg = svg_heatmap("w(theta1, theta2) with level segments", &heat, &lines);
    svg.name = "levelset.svg".into();

    let result = json!({
        "energy": c.energy,
        "alphas": alphas,
        "level_segments": search.segments.iter().map(|s| json!({
            "kind": format!("{:?}", s.kind), "a": s.params.a, "b": s.params.b, "residual": s.residual,
        })).collect::<Vec<_>>(),
        "search_min": search.search_min,
    });
    let summary = vec![segs.len().to_string(), num(min_alpha), found.to_string(), opt_num(search.search_min)];
    Ok(Outcome {
        summary,
        artifacts: vec![
            csv_named("levelset.csv", &["a", "b", "offset", "E", "delta", "measure"], &rows)?,
            json_artifact("result.json", &result)?,
            svg,
        ],
        result,
    })
}

/// `theta -> (theta, a theta + b mod 1)` cut into pieces at the wrap.
fn torus_line(p: SegmentParams) -> Vec<Vec<(f64, f64)>> {
    let mut out: Vec<Vec<(f64, f64)>> = vec![Vec::new()];
    let mut prev: Option<f64> = None;
    for i in 0..=400 {
        let t = i as f64 / 400.0;
        let y = (p.a * t + p.b).rem_euclid(1.0);
        if prev.is_some_and(|q| (q - y).abs() > 0.5) {
            out.push(Vec::new());
        }
        out.last_mut().expect("nonempty").push((t, y));
        prev = Some(y);
    }
    out
}

fn one() -> f64 {
    1.0
}
fn b_default() -> f64 {
    0.9
}
fn sixteen() -> usize {
    16
}
fn thousand() -> usize {
    1000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineCfg {
    pub start: [f64; 2],
    pub end: [f64; 2],
    #[serde(default = "thousand")]
    pub samples: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GreenScanCfg {
    pub region: RegionInput,
    pub energy: f64,
    #[serde(default = "one")]
    pub gamma: f64,
    #[serde(default = "b_default")]
    pub b: f64,
    #[serde(default = "one")]
    pub relax: f64,
    /// Phases `theta_i = i / grid` in both directions.
    #[serde(default = "sixteen")]
    pub grid: usize,
    #[serde(default)]
    pub metric: Metric,
    #[serde(default)]
    pub line: Option<LineCfg>,
}

fn green_scan(op: &OperatorInput, c: &GreenScanCfg, seed: u64) -> Result<Outcome> {
    let fam = op.family()?;
    let region = c.region.build()?;
    let gp = GoodBadParams::new(c.gamma, c.b).relaxed(c.relax);
    let sigma = region.diameter();
    let points: Vec<(f64, f64)> = (0..c.grid)
        .flat_map(|i| (0..c.grid).map(move |j| (j as f64 / c.grid as f64, i as f64 / c.grid as f64)))
        .collect();
    let reports: Vec<(f64, Option<f64>, bool, bool)> = points
        .par_iter()
        .map(|&th| {
            let h = fam.assemble(&region, th)?;
            Ok(match classify_with_metric(&h, c.energy, &gp, c.metric) {
                Ok(r) => (r.norm, r.gamma_fit, r.good_norm, r.good_decay),
                Err(CoreError::ResonantEnergy { .. }) => (f64::INFINITY, None, false, false),
                Err(e) => return Err(anyhow!(e)),
            })
        })
        .collect::<Result<_>>()?;
    let rows: Vec<Vec<String>> = points
        .iter()
        .zip(&reports)
        .map(|(th, r)| {
            vec![
                sigma.to_string(),
                num(th.0),
                num(th.1),
                num(c.energy),
                num(r.0),
                opt_num(r.1),
                r.2.to_string(),
                r.3.to_string(),
            ]
        })
        .collect();
    let bad = reports.iter().filter(|r| !(r.2 && r.3)).count();
    let heat: Vec<Vec<f64>> = (0..c.grid)
        .map(|i| (0..c.grid).map(|j| if reports[i * c.grid + j].2 && reports[i * c.grid + j].3 { 1.0 } else { 0.0 }).collect())
        .collect();
    let mut svg = svg_heatmap("good (yellow) / bad (blue) phases", &heat, &[]);
    svg.name = "green_scan.svg".into();
    let line = match &c.line {
        Some(l) => {
            let seg = PhaseSegment { start: (l.start[0], l.start[1]), end: (l.end[0], l.end[1]) };
            Some(badset_measure_on_line(&seg, &region, &fam, c.energy, &gp, l.samples, seed)?)
        }
        None => None,
    };
    let frac = if points.is_empty() { 0.0 } else { bad as f64 / points.len() as f64 };
    let result = json!({
        "sigma": sigma,
        "points": points.len(),
        "bad": bad,
        "bad_fraction": frac,
        "line": line,
        "reference_ldt": (-(sigma as f64).powf(0.05)).exp(),
    });
    Ok(Outcome {
        summary: vec![points.len().to_string(), bad.to_string(), num(frac), opt_num(line.map(|l| l.measure))],
        artifacts: vec![
            csv_named(
                "green_scan.csv",
                &["scale", "theta1", "theta2", "E", "norm", "gamma_fit", "good_norm", "good_decay"],
                &rows,
            )?,
            json_artifact("result.json", &result)?,
            svg,
        ],
        result,
    })
}

fn delta_dio_default() -> f64 {
    0.01
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DioCfg {
    pub c: f64,
    #[serde(default = "delta_dio_default")]
    pub delta: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArithCfg {
    #[serde(default)]
    pub omega: crate::config::OmegaInput,
    pub n: i64,
    pub band: BandSpec,
    #[serde(default = "delta_dio_default")]
    pub delta_dio: f64,
    #[serde(default)]
    pub dio: Option<DioCfg>,
    #[serde(default)]
    pub short_vectors: bool,
    /// Random probes for an `eta` estimate; 0 keeps the band's own value.
    #[serde(default)]
    pub eta_probes: usize,
}

fn arith_count(c: &ArithCfg, seed: u64) -> Result<Outcome> {
    let omega = c.omega.value()?;
    let band = c.band.build(c.n);
    let hits = lattice_points_in_band(&band, omega, c.n)?;
    let eta = if c.eta_probes > 0 { band.estimate_eta(c.eta_probes, seed) } else { band.eta };
    let envelope = counting_envelope(c.n, c.delta_dio);
    let rows: Vec<Vec<String>> = hits
        .iter()
        .map(|&(k1, k2)| vec![k1.to_string(), k2.to_string(), num(frac_mult(k1, omega)), num(frac_mult(k2, omega))])
        .collect();
    let mut result = json!({
        "count": hits.len(),
        "N": c.n,
        "eta": eta,
        "envelope": envelope,
        "band": band.description,
    });
    if let Some(d) = &c.dio {
        let chk = diophantine_check(omega, c.n, d.c, d.delta);
        result["dio"] = json!({
            "passes": chk.passes,
            "worst_k": chk.worst_k,
            "worst_value": chk.worst_value,
            "best_constant": best_dio_constant(omega, c.n, d.delta),
        });
    }
    if c.short_vectors {
        let s = short_distance_vectors(omega, c.n)?;
        result["short_vectors"] = json!({ "count": s.count, "radius": s.radius, "degenerate": s.degenerate });
    }
    Ok(Outcome {
        summary: vec![hits.len().to_string(), c.n.to_string(), num(eta), num(envelope)],
        artifacts: vec![
            csv_named("hits.csv", &["k1", "k2", "theta1", "theta2"], &rows)?,
            json_artifact("result.json", &result)?,
        ],
        result,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumCfg {
    pub region: RegionInput,
    #[serde(default)]
    pub window: Option<[f64; 2]>,
}

fn spectrum(op: &OperatorInput, c: &SpectrumCfg, seed: u64) -> Result<Outcome> {
    let fam = op.family()?;
    let region = c.region.build()?;
    let h = fam.assemble(&region, op.theta())?;
    let pairs = eigensolve(&h, c.window.map(|w| (w[0], w[1])), seed)?;
    let rows: Vec<Vec<String>> = pairs.iter().enumerate().map(|(i, p)| vec![i.to_string(), num(p.value)]).collect();
    let (lo, hi) = (pairs.first().map(|p| p.value), pairs.last().map(|p| p.value));
    let result = json!({ "sites": h.dim(), "count": pairs.len(), "min": lo, "max": hi });
    Ok(Outcome {
        summary: vec![pairs.len().to_string(), opt_num(lo), opt_num(hi)],
        artifacts: vec![csv_named("spectrum.csv", &["index", "eigenvalue"], &rows)?, json_artifact("result.json", &result)?],
        result,
    })
}

fn twenty() -> usize {
    20
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecayCfg {
    pub region: RegionInput,
    #[serde(default = "twenty")]
    pub count: usize,
    #[serde(default)]
    pub metric: Metric,
}

fn decay(op: &OperatorInput, c: &DecayCfg, seed: u64) -> Result<Outcome> {
    let fam = op.family()?;
    let region = c.region.build()?;
    let h = fam.assemble(&region, op.theta())?;
    let states = mid_spectrum_states(&h, &fam.u.value_set(), c.count, seed)?;
    let profiles = states
        .iter()
        .map(|s| decay_profile(s.value, &s.vector, &region, c.metric))
        .collect::<qp2loc::Result<Vec<_>>>()?;
    let rows: Vec<Vec<String>> = profiles
        .iter()
        .map(|p| {
            vec![
                num(p.eigenvalue),
                p.center.0.to_string(),
                p.center.1.to_string(),
                opt_num(p.rate),
                num(p.raw_rate),
                num(p.r2),
                num(p.ipr),
                p.sites_used.to_string(),
            ]
        })
        .collect();
    let raw: Vec<f64> = profiles.iter().map(|p| p.raw_rate).collect();
    let fitted: Vec<f64> = profiles.iter().filter_map(|p| p.rate).collect();
    let unfit = profiles.len() - fitted.len();
    let target = if fam.lambda > 2.0 { Some((fam.lambda / 2.0).ln()) } else { None };
    let med_raw = (!raw.is_empty()).then(|| median(&raw));
    let med_fit = (!fitted.is_empty()).then(|| median(&fitted));
    let mut artifacts = vec![csv_named(
        "decay.csv",
        &["eigenvalue", "center1", "center2", "rate", "raw_rate", "r2", "ipr", "sites_used"],
        &rows,
    )?];
    if let Some(s) = states.first() {
        let bb = region.bbox();
        let mut heat = vec![vec![f64::NAN; bb.width() as usize]; bb.height() as usize];
        for (i, &(x, y)) in region.sites().iter().enumerate() {
            heat[(y - bb.y.0) as usize][(x - bb.x.0) as usize] = s.vector[i].abs().max(1e-300).log10();
        }
        let mut svg = svg_heatmap(&format!("log10 |psi|, E = {:.6}", s.value), &heat, &[]);
        svg.name = "decay.svg".into();
        artifacts.push(svg);
    }
    let result = json!({
        "states": profiles.len(),
        "median_raw_rate": med_raw,
        "median_rate": med_fit,
        "unfit": unfit,
        "target_log_lambda_half": target,
        "metric": c.metric,
    });
    artifacts.insert(1, json_artifact("result.json", &result)?);
    Ok(Outcome {
        summary: vec![profiles.len().to_string(), opt_num(med_raw), opt_num(med_fit), unfit.to_string(), opt_num(target)],
        artifacts,
        result,
    })
}

fn three() -> i64 {
    3
}
fn hundred() -> usize {
    100
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoissonCfg {
    pub region: RegionInput,
    #[serde(default = "hundred")]
    pub pairs: usize,
    /// Sub-regions are the cubes `c + [-r, r]^2`.
    #[serde(default = "three")]
    pub sub_half: i64,
}

fn poisson(op: &OperatorInput, c: &PoissonCfg, seed: u64) -> Result<Outcome> {
    let fam = op.family()?;
    let region = c.region.build()?;
    let h = fam.assemble(&region, op.theta())?;
    let pairs = eigensolve(&h, None, seed)?;
    let bb = region.bbox();
    let r = c.sub_half.max(0);
    let (xs, ys) = ((bb.x.0 + r + 1, bb.x.1 - r - 1), (bb.y.0 + r + 1, bb.y.1 - r - 1));
    if xs.0 > xs.1 || ys.0 > ys.1 {
        bail!("region too small for sub-regions of half-side {r}");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    let mut done = 0;
    let mut tries = 0;
    while done < c.pairs {
        tries += 1;
        if tries > 100 * c.pairs.max(1) {
            bail!("could not place sub-regions inside the region");
        }
        let j = rng.random_range(0..pairs.len());
        let centre = (rng.random_range(xs.0..=xs.1), rng.random_range(ys.0..=ys.1));
        let inner = (r - 1).max(0);
        let m = (
            centre.0 + rng.random_range(-inner..=inner),
            centre.1 + rng.random_range(-inner..=inner),
        );
        let sub = Region::cube(centre, r);
        let res = match poisson_check(&h, &pairs[j].vector, pairs[j].value, &sub, m) {
            Ok(x) => x,
            Err(CoreError::InvalidInput(_)) | Err(CoreError::ResonantEnergy { .. }) => continue,
            Err(e) => return Err(anyhow!(e)),
        };
        worst = worst.max(res);
        rows.push(vec![
            done.to_string(),
            j.to_string(),
            num(pairs[j].value),
            centre.0.to_string(),
            centre.1.to_string(),
            m.0.to_string(),
            m.1.to_string(),
            num(res),
        ]);
        done += 1;
    }
    let result = json!({ "pairs": done, "max_residual": worst });
    Ok(Outcome {
        summary: vec![done.to_string(), num(worst)],
        artifacts: vec![
            csv_named("poisson.csv", &["pair", "state", "E", "c1", "c2", "m1", "m2", "residual"], &rows)?,
            json_artifact("result.json", &result)?,
        ],
        result,
    })
}

fn ten() -> i64 {
    10
}
fn four_i() -> i64 {
    4
}
fn forty() -> i64 {
    40
}
fn c1_default() -> f64 {
    0.9
}
fn relax_scan() -> f64 {
    100.0
}
fn rho_default() -> f64 {
    0.05
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResonanceCfg {
    #[serde(default = "ten")]
    pub n: i64,
    #[serde(default = "four_i")]
    pub m: i64,
    #[serde(default = "forty")]
    pub k: i64,
    #[serde(default = "c1_default")]
    pub c1: f64,
    #[serde(default = "one")]
    pub c2: f64,
    #[serde(default = "one")]
    pub gamma: f64,
    #[serde(default = "b_default")]
    pub b: f64,
    #[serde(default = "relax_scan")]
    pub relax: f64,
    /// Only used for the printed reference scales.
    #[serde(default = "rho_default")]
    pub rho: f64,
}

fn resonance(op: &OperatorInput, c: &ResonanceCfg) -> Result<Outcome> {
    let fam = op.family()?;
    let cfg = ResonanceConfig {
        theta_ref: op.theta(),
        n: c.n,
        m: c.m,
        k: c.k,
        c1: c.c1,
        c2: c.c2,
        gp: GoodBadParams::new(c.gamma, c.b).relaxed(c.relax),
    };
    let scan = double_resonance_scan(&fam, &cfg)?;
    let rows: Vec<Vec<String>> = scan
        .rows
        .iter()
        .map(|r| vec![r.k.0.to_string(), r.k.1.to_string(), num(r.ej), r.mbox_good.to_string(), opt_bool(r.nbox_good)])
        .collect();
    let mbox_bad = scan.rows.iter().filter(|r| !r.mbox_good).count();
    let log_n = (c.n as f64).ln();
    let result = json!({
        "lambda": scan.lambda,
        "omega": scan.omega,
        "N": scan.n,
        "M": scan.m,
        "k_range": [scan.k_range.0, scan.k_range.1],
        "energies": scan.energies.len(),
        "rows": scan.rows.len(),
        "mbox_bad": mbox_bad,
        "bad_pairs": scan.bad_pairs.len(),
        "bad_fraction": scan.bad_fraction(),
        "reference_scales": {
            "note": "asymptotic relations K = exp((log N)^(2/rho)), M = [(log N)^(3/(2 rho))]; not enforced",
            "log_K": log_n.powf(2.0 / c.rho),
            "M": log_n.powf(1.5 / c.rho).floor(),
        },
    });
    Ok(Outcome {
        summary: vec![
            scan.rows.len().to_string(),
            mbox_bad.to_string(),
            scan.bad_pairs.len().to_string(),
            num(scan.bad_fraction()),
        ],
        artifacts: vec![
            csv_named("double_resonance.csv", &["k1", "k2", "Ej", "Mbox_good", "Nbox_good"], &rows)?,
            json_artifact("result.json", &result)?,
        ],
        result,
    })
}

fn r0_default() -> f64 {
    2.0
}
fn six() -> i64 {
    6
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnulusCfg {
    pub energy: f64,
    #[serde(default = "six")]
    pub n: i64,
    #[serde(default = "r0_default")]
    pub r0: f64,
    #[serde(default = "one")]
    pub gamma: f64,
    #[serde(default = "b_default")]
    pub b: f64,
    #[serde(default = "relax_scan")]
    pub relax: f64,
    #[serde(default)]
    pub translations: Vec<[i64; 2]>,
}

fn annulus(op: &OperatorInput, c: &AnnulusCfg) -> Result<Outcome> {
    let fam = op.family()?;
    let cfg = AnnulusConfig {
        theta: op.theta(),
        energy: c.energy,
        n: c.n,
        r0: c.r0,
        gp: GoodBadParams::new(c.gamma, c.b).relaxed(c.relax),
        translations: c.translations.iter().map(|t| (t[0], t[1])).collect(),
    };
    let res = annulus_scan(&fam, &cfg)?;
    let result = serde_json::to_value(&res)?;
    Ok(Outcome {
        summary: vec![
            res.radius.map(|r| r.to_string()).unwrap_or_default(),
            num(res.width),
            res.boxes_checked.to_string(),
        ],
        artifacts: vec![json_artifact("result.json", &result)?],
        result,
    })
}

fn eight() -> usize {
    8
}
fn spread_default() -> i64 {
    100
}
fn half() -> f64 {
    0.5
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiscaleCfg {
    pub scales: Vec<i64>,
    pub energy: f64,
    #[serde(default = "eight")]
    pub boxes: usize,
    #[serde(default = "spread_default")]
    pub spread: i64,
    #[serde(default = "one")]
    pub gamma: f64,
    #[serde(default = "b_default")]
    pub b: f64,
    #[serde(default = "half")]
    pub drift_delta: f64,
    #[serde(default)]
    pub metric: Metric,
}

fn multiscale(op: &OperatorInput, c: &MultiscaleCfg, seed: u64) -> Result<Outcome> {
    let fam: OperatorFamily = op.family()?;
    let cfg = MultiscaleConfig {
        scales: c.scales.clone(),
        boxes_per_scale: c.boxes,
        spread: c.spread,
        theta: op.theta(),
        energy: c.energy,
        gp: GoodBadParams::new(c.gamma, c.b),
        drift_delta: c.drift_delta,
        fit_metric: c.metric,
        seed,
    };
    let res = multiscale_sweep(&fam, &cfg)?;
    let rows: Vec<Vec<String>> = res
        .rows
        .iter()
        .map(|r| {
            vec![
                r.scale.to_string(),
                r.boxes.to_string(),
                r.bad.to_string(),
                num(r.bad_fraction),
                opt_num(r.gamma_fit),
                opt_bool(r.drift_ok),
            ]
        })
        .collect();
    let last = res.rows.last().expect("ladder is nonempty");
    let drift_ok = res.rows.iter().all(|r| r.drift_ok != Some(false));
    let result = serde_json::to_value(&res)?;
    Ok(Outcome {
        summary: vec![res.rows.len().to_string(), num(last.bad_fraction), opt_num(last.gamma_fit), drift_ok.to_string()],
        artifacts: vec![
            csv_named("multiscale.csv", &["scale", "boxes", "bad", "bad_fraction", "gamma_fit", "drift_ok"], &rows)?,
            json_artifact("result.json", &result)?,
        ],
        result,
    })
}
