use std::collections::BTreeMap;
use std::path::Path;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sigspace::field::{deform_metric_field, seam_report, MetricFieldGrid};
use sigspace::forms::{signature_of_with_tol, SignatureMethod, SymmetricForm};
use sigspace::geometry::{deformed_metric, metric_components, one_form_components, qinv_alpha_alpha};
use sigspace::group::{act, transitive_witness, GroupElement};
use sigspace::measure::{convergence_sweep, density, invariance_experiment, mc_integrate, BoxDomain, Integrand, MIN_SAMPLES};
use sigspace::suite::{projective_checks, run_suite, Check};

use crate::report::{read_json, write_json, CliError, CliResult, Report};

pub const DEFAULT_DEGENERACY_TOL: f64 = 1e-10;

fn rows(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

fn positive(name: &str, value: f64) -> CliResult<f64> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(CliError::new("InvalidArgument", format!("{name} must be positive and finite, got {value}")))
    }
}

pub fn signature(input: &Path, method: SignatureMethod, tol: Option<f64>) -> CliResult<Report> {
    let form: SymmetricForm = read_json(input)?;
    let tol = positive("--tol", tol.unwrap_or(DEFAULT_DEGENERACY_TOL))?;
    let sig = signature_of_with_tol(&form, method, tol)?;
    let mut r = Report::new("signature");
    r.input("in", path_str(input)).input("method", method).input("tol", tol);
    r.field("signature", sig);
    Ok(r)
}

pub fn metric(input: &Path, a: Option<f64>, tol: Option<f64>) -> CliResult<Report> {
    let form: SymmetricForm = read_json(input)?;
    let tol = positive("--tol", tol.unwrap_or(1e-8))?;
    let q = match a {
        Some(a) if a.is_finite() => deformed_metric(&form, a)?,
        Some(a) => return Err(CliError::new("InvalidArgument", format!("--a must be finite, got {a}"))),
        None => metric_components(&form)?,
    };
    let contraction = qinv_alpha_alpha(&form)?;
    let n = form.dim() as f64;
    let mut r = Report::new("metric");
    r.input("in", path_str(input)).input("a", a).input("tol", tol);
    r.field("Q", rows(&q.components))
        // null where the deformed metric degenerates
        .field("signature", q.signature().ok())
        .field("alpha", one_form_components(&form)?.components.as_slice())
        .field("qinv_alpha_alpha", contraction);
    r.check(Check::below("qinv_alpha_alpha = n", (contraction - n).abs() / n, tol));
    Ok(r)
}

pub fn density_task(input: &Path, tol: Option<f64>) -> CliResult<Report> {
    let form: SymmetricForm = read_json(input)?;
    let tol = positive("--tol", tol.unwrap_or(1e-8))?;
    let value = density(&form)?.value;
    let n = form.dim() as f64;
    let power_law = 2f64.powf(n * (n - 1.0) / 4.0) * form.determinant().abs().powf(-(n + 1.0) / 2.0);
    let mut r = Report::new("density");
    r.input("in", path_str(input)).input("tol", tol);
    r.field("density", value).field("power_law", power_law);
    r.check(Check::below("power-law agreement", (value - power_law).abs() / power_law, tol));
    Ok(r)
}

pub fn witness(from: &Path, to: &Path, positive_det: bool, tol: Option<f64>) -> CliResult<Report> {
    let a: SymmetricForm = read_json(from)?;
    let b: SymmetricForm = read_json(to)?;
    let tol = positive("--tol", tol.unwrap_or(1e-9))?;
    let g = transitive_witness(&a, &b, positive_det)?;
    let residual = (act(&g, &a)?.entries() - b.entries()).amax();
    let mut r = Report::new("witness");
    r.input("from", path_str(from))
        .input("to", path_str(to))
        .input("positive_det", positive_det)
        .input("tol", tol);
    r.field("g", rows(g.entries())).field("residual", residual);
    r.check(Check::below("relative residual", residual / b.scale(), tol));
    Ok(r)
}

/// Configuration of `mc` and `invariance`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub domain: BoxDomain,
    pub integrand: Integrand,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_samples: Option<usize>,
    /// Sample counts for `--csv` sweeps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Vec<usize>>,
    /// Group element for `invariance`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<GroupElement>,
}

impl ExperimentConfig {
    fn load(path: &Path, seed: Option<u64>, samples: Option<usize>) -> CliResult<(Self, u64, usize)> {
        let config: ExperimentConfig = read_json(path)?;
        config.domain.validate()?;
        config.integrand.validate(config.domain.dim())?;
        let seed = seed
            .or(config.seed)
            .ok_or_else(|| CliError::new("MissingSeed", "stochastic tasks need --seed or a \"seed\" field"))?;
        let n = samples.or(config.n_samples).ok_or_else(|| {
            CliError::new("MissingSamples", "stochastic tasks need --samples or an \"n_samples\" field")
        })?;
        Ok((config, seed, n))
    }
}

#[derive(Serialize)]
struct SweepRow {
    n_samples: usize,
    estimate: f64,
    std_error: f64,
    acceptance_rate: f64,
}

pub fn mc(
    config_path: &Path,
    seed: Option<u64>,
    samples: Option<usize>,
    tol: Option<f64>,
    csv_path: Option<&Path>,
) -> CliResult<Report> {
    let (config, seed, n) = ExperimentConfig::load(config_path, seed, samples)?;
    let f = |s: &SymmetricForm| config.integrand.eval(s);
    let est = mc_integrate(f, &config.domain, seed, n)?;
    let mut r = Report::new("mc");
    r.input("config", path_str(config_path))
        .input("experiment", &config)
        .input("seed", seed)
        .input("n_samples", n)
        .input("tol", tol);
    r.field("estimate", est.value)
        .field("std_error", est.std_error)
        .field("n_samples", est.n_samples)
        .field("acceptance_rate", est.acceptance_rate());
    if let Some(tol) = tol {
        r.check(Check::below("std_error", est.std_error, positive("--tol", tol)?));
    }
    if let Some(path) = csv_path {
        let counts = config.sweep.clone().unwrap_or_else(|| {
            [8, 4, 2, 1].iter().map(|d| (n / d).max(MIN_SAMPLES)).collect()
        });
        let sweep = convergence_sweep(f, &config.domain, seed, &counts)?;
        let mut w = csv::Writer::from_path(path)?;
        let rows: Vec<SweepRow> = sweep
            .iter()
            .map(|e| SweepRow {
                n_samples: e.n_samples,
                estimate: e.value,
                std_error: e.std_error,
                acceptance_rate: e.acceptance_rate(),
            })
            .collect();
        for row in &rows {
            w.serialize(row)?;
        }
        w.flush().map_err(|e| CliError::new("Io", e.to_string()))?;
        r.input("csv", path_str(path)).field("sweep", rows);
    }
    Ok(r)
}

pub fn invariance(config_path: &Path, seed: Option<u64>, samples: Option<usize>) -> CliResult<Report> {
    let (config, seed, n) = ExperimentConfig::load(config_path, seed, samples)?;
    let g = config
        .g
        .clone()
        .ok_or_else(|| CliError::new("InvalidArgument", "invariance needs a group element \"g\""))?;
    let rep = invariance_experiment(|s| config.integrand.eval(s), &g, &config.domain, seed, n)?;
    let mut r = Report::new("invariance");
    r.input("config", path_str(config_path))
        .input("experiment", &config)
        .input("seed", seed)
        .input("n_samples", n);
    r.field("direct", rep.direct)
        .field("transformed", rep.transformed)
        .field("image_box", &rep.image_box)
        .field("difference", rep.difference)
        .field("combined_std_error", rep.combined_std_error)
        .field("sigmas", rep.sigmas);
    r.check(Check::below("sigmas", rep.sigmas, 3.0));
    Ok(r)
}

pub fn deform(grid_path: &Path, center: u64, target_path: &Path, out: Option<&Path>, tol: Option<f64>) -> CliResult<Report> {
    let grid: MetricFieldGrid = read_json(grid_path)?;
    grid.validate()?;
    let target: SymmetricForm = read_json(target_path)?;
    let tol = positive("--tol", tol.unwrap_or(1e-9))?;
    let deformed = deform_metric_field(&grid, center, &target)?;
    let at_center = deformed
        .point(center)
        .ok_or(sigspace::Error::PointNotInField(center))?;
    let center_residual = (at_center.q.entries() - target.entries()).amax() / target.scale();
    let exterior_changed = grid
        .points
        .iter()
        .zip(&deformed.points)
        .filter(|(before, after)| before.r2() >= 1.0 && before != after)
        .count();
    let seam = seam_report(&deformed);
    if let Some(path) = out {
        write_json(path, &deformed)?;
    }

    let mut r = Report::new("deform");
    r.input("grid", path_str(grid_path))
        .input("center", center)
        .input("target", path_str(target_path))
        .input("out", out.map(path_str))
        .input("tol", tol);
    r.field("n_points", deformed.points.len())
        .field("center_residual", center_residual)
        .field("exterior_changed", exterior_changed)
        .field("seam", seam);
    r.check(Check::below("center residual", center_residual, tol))
        .check(Check::at_most("exterior points changed", exterior_changed as f64, 0.0))
        .check(Check::at_most(
            "seam quotient",
            seam.seam_quotient,
            10.0 * seam.interior_quotient + 1e-12,
        ));
    Ok(r)
}

pub const MAX_DEMO_DIM: usize = 256;

pub fn projective_demo(points: usize, dim: usize, seed: u64, c: f64) -> CliResult<Report> {
    let c = positive("--rescale-c", c)?;
    let total = (dim as u128).checked_pow(points as u32).unwrap_or(u128::MAX);
    if points == 0 || dim == 0 || total > MAX_DEMO_DIM as u128 {
        return Err(CliError::new(
            "InvalidArgument",
            format!("need points >= 1, dim >= 1 and dim^points <= {MAX_DEMO_DIM}, got {dim}^{points}"),
        ));
    }
    let factors: Vec<(u64, usize)> = (0..points as u64).map(|p| (p, dim)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let checks = projective_checks(&mut rng, &factors, &[c])?;
    let mut r = Report::new("projective-demo");
    r.input("points", points).input("dim", dim).input("seed", seed).input("rescale_c", c);
    let residuals: BTreeMap<&str, f64> = checks.iter().map(|k| (k.name.as_str(), k.value)).collect();
    r.field("residuals", residuals);
    for k in checks {
        r.check(k);
    }
    Ok(r)
}

pub fn suite(seed: u64) -> CliResult<Report> {
    let outcomes = run_suite(seed);
    let mut r = Report::new("suite");
    r.input("seed", seed);
    let mut criteria = Vec::new();
    let mut times = BTreeMap::new();
    for o in &outcomes {
        eprintln!("{o}");
        times.insert(o.id.to_string(), o.elapsed_s);
        let mut v = serde_json::to_value(o).map_err(|e| CliError::new("Json", e.to_string()))?;
        if let Value::Object(m) = &mut v {
            m.remove("elapsed_s");
        }
        criteria.push(v);
    }
    let passed = outcomes.iter().filter(|o| o.passed).count();
    r.field("criteria", criteria)
        .field("passed", passed)
        .field("total", outcomes.len())
        .field("pass", passed == outcomes.len());
    r.timing("criteria_s", times);
    Ok(r)
}

