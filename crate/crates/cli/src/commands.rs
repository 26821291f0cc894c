use std::fmt::Write as _;
use std::path::PathBuf;

use gramgap_core::{
    algebra, linalg, sampler, spectrum, stats, CorrelationEnsemble, EnsembleConfig, SpectralPoint,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::value::RawValue;

use crate::config::{RunConfig, SelfTestConfig};
use crate::output::{fmt, num, nums, write_json, write_text};
use crate::CliError;

/// Grid points for `support` and `verify` when the config gives none.
pub const DEFAULT_SUPPORT_STEPS: usize = 4001;
pub const DEFAULT_DENSITY_STEPS: usize = 1001;
/// Default grid end, relative to the a priori support bound.
pub const GRID_MARGIN: f64 = 1.01;
pub const DEFAULT_GAP_TRIALS: usize = 200;
pub const DEFAULT_BIAS_TRIALS: usize = 4000;
pub const DEFAULT_SLOPE_THRESHOLD: f64 = -1.5;

pub struct Context {
    pub config: RunConfig,
    /// Directory of the config file; relative ensemble paths resolve here.
    pub base_dir: Option<PathBuf>,
    pub out_dir: PathBuf,
}

impl Context {
    fn ensemble_config(&self) -> Result<&EnsembleConfig, CliError> {
        self.config
            .ensemble
            .as_ref()
            .ok_or_else(|| CliError::Config("config has no ensemble".into()))
    }

    fn ensemble(&self) -> Result<CorrelationEnsemble, CliError> {
        Ok(self.ensemble_config()?.build(self.base_dir.as_deref())?)
    }

    fn seed(&self) -> u64 {
        self.config.seed.unwrap_or(0)
    }

    fn y(&self) -> f64 {
        self.config.y.unwrap_or(spectrum::DEFAULT_Y)
    }

    fn threshold(&self) -> f64 {
        self.config.threshold.unwrap_or(spectrum::DEFAULT_THRESHOLD)
    }

    fn x_hi(&self, e: &CorrelationEnsemble) -> f64 {
        self.config
            .grid
            .as_ref()
            .and_then(|g| g.x_hi)
            .unwrap_or_else(|| GRID_MARGIN * spectrum::support_upper_bound(e))
    }

    fn steps(&self, default: usize) -> usize {
        self.config
            .grid
            .as_ref()
            .and_then(|g| g.steps)
            .unwrap_or(default)
    }

    fn z(&self, default: [f64; 2]) -> Result<SpectralPoint, CliError> {
        let [re, im] = self.config.z.unwrap_or(default);
        Ok(SpectralPoint::from_parts(re, im)?)
    }
}

#[derive(Serialize)]
struct DensityMeta {
    command: &'static str,
    config: serde_json::Value,
    points: usize,
    x_lo: Box<RawValue>,
    x_hi: Box<RawValue>,
    y: Box<RawValue>,
    mass: Box<RawValue>,
    max_iterations: usize,
}

pub fn density(ctx: &Context) -> Result<(), CliError> {
    let e = ctx.ensemble()?;
    let x_lo = ctx.config.grid.as_ref().and_then(|g| g.x_lo).unwrap_or(0.0);
    let x_hi = ctx.x_hi(&e);
    let curve = spectrum::density(&e, x_lo, x_hi, ctx.steps(DEFAULT_DENSITY_STEPS), ctx.y())?;
    let mut csv = String::from("x,density\n");
    for (x, y) in curve.xs.iter().zip(&curve.ys) {
        writeln!(csv, "{},{}", fmt(*x), fmt(*y)).unwrap();
    }
    write_text(&ctx.out_dir, "density.csv", &csv)?;
    let meta = DensityMeta {
        command: "density",
        config: ctx.config.echo(ctx.seed()),
        points: curve.xs.len(),
        x_lo: num(x_lo),
        x_hi: num(x_hi),
        y: num(curve.y_imag),
        mass: num(curve.mass),
        max_iterations: curve.max_iterations,
    };
    write_json(&ctx.out_dir, "meta.json", &meta)?;
    println!("mass {}", fmt(curve.mass));
    Ok(())
}

#[derive(Serialize)]
struct SupportJson {
    intervals: Vec<[Box<RawValue>; 2]>,
    epsilon_at_zero: Box<RawValue>,
    y: Box<RawValue>,
    threshold: Box<RawValue>,
    grid_step: Box<RawValue>,
}

fn support_json(rep: &gramgap_core::SupportReport) -> SupportJson {
    SupportJson {
        intervals: rep
            .intervals
            .iter()
            .map(|&(a, b)| [num(a), num(b)])
            .collect(),
        epsilon_at_zero: num(rep.epsilon_at_zero),
        y: num(rep.y_imag),
        threshold: num(rep.threshold),
        grid_step: num(rep.grid_step),
    }
}

fn detect(ctx: &Context, e: &CorrelationEnsemble) -> Result<gramgap_core::SupportReport, CliError> {
    Ok(spectrum::detect_support(
        e,
        ctx.x_hi(e),
        ctx.steps(DEFAULT_SUPPORT_STEPS),
        ctx.y(),
        ctx.threshold(),
    )?)
}

pub fn support(ctx: &Context) -> Result<(), CliError> {
    let e = ctx.ensemble()?;
    let rep = detect(ctx, &e)?;
    write_json(&ctx.out_dir, "support.json", &support_json(&rep))?;
    println!("{}", fmt(rep.epsilon_at_zero));
    Ok(())
}

#[derive(Serialize)]
struct LambdaSummary {
    min: Box<RawValue>,
    mean: Box<RawValue>,
    q05: Box<RawValue>,
    q50: Box<RawValue>,
    q95: Box<RawValue>,
    max: Box<RawValue>,
}

#[derive(Serialize)]
struct Verdict {
    epsilon_hat: Box<RawValue>,
    min_lambda_min: Box<RawValue>,
    violations_in_gap: usize,
    test_interval: [Box<RawValue>; 2],
    trials: usize,
    seed: u64,
    lambda_min: LambdaSummary,
    support: SupportJson,
}

pub fn verify(ctx: &Context) -> Result<(), CliError> {
    let e = ctx.ensemble()?;
    let rep = detect(ctx, &e)?;
    let eps = rep.epsilon_at_zero;
    let [a, b] = ctx.config.test_interval.unwrap_or([0.0, eps / 2.0]);
    let trials = ctx.config.trials.unwrap_or(DEFAULT_GAP_TRIALS);
    let seed = ctx.seed();
    let gap = sampler::monte_carlo_gap(&e, trials, seed, Some((a, b)))?;

    let mut csv = String::from("trial,seed,lambda_min,count_in_test_interval\n");
    for (t, ((s, l), c)) in gap
        .batch
        .seeds
        .iter()
        .zip(&gap.batch.lambda_min)
        .zip(&gap.counts)
        .enumerate()
    {
        writeln!(csv, "{t},{s},{},{c}", fmt(*l)).unwrap();
    }
    write_text(&ctx.out_dir, "trials.csv", &csv)?;
    if ctx.config.dump_eigenvalues == Some(true) {
        let mut dump = String::new();
        for set in &gap.batch.eigenvalue_sets {
            let row: Vec<String> = set.iter().map(|&l| fmt(l)).collect();
            writeln!(dump, "{}", row.join(",")).unwrap();
        }
        write_text(&ctx.out_dir, "eigenvalues.csv", &dump)?;
    }

    let mut sorted = gap.batch.lambda_min.clone();
    sorted.sort_by(f64::total_cmp);
    let violations = gap.total_in_interval();
    let verdict = Verdict {
        epsilon_hat: num(eps),
        min_lambda_min: num(gap.min_over_trials),
        violations_in_gap: violations,
        test_interval: [num(a), num(b)],
        trials,
        seed,
        lambda_min: LambdaSummary {
            min: num(sorted[0]),
            mean: num(stats::mean(&sorted)),
            q05: num(stats::quantile(&sorted, 0.05)),
            q50: num(stats::quantile(&sorted, 0.5)),
            q95: num(stats::quantile(&sorted, 0.95)),
            max: num(sorted[sorted.len() - 1]),
        },
        support: support_json(&rep),
    };
    write_json(&ctx.out_dir, "verdict.json", &verdict)?;
    println!(
        "epsilon_hat {} min_lambda_min {} violations {violations}",
        fmt(eps),
        fmt(gap.min_over_trials)
    );
    if violations > 0 {
        return Err(CliError::Verification(format!(
            "{violations} eigenvalues in [{a}, {b}] over {trials} trials"
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct VarianceRow {
    #[serde(rename = "N")]
    dim: usize,
    n: usize,
    measured_var: Box<RawValue>,
    bound: Box<RawValue>,
    distance_substituted: bool,
}

#[derive(Serialize)]
struct ScalingJson {
    config: serde_json::Value,
    sizes: Vec<usize>,
    bias: Vec<Box<RawValue>>,
    stderr: Vec<Box<RawValue>>,
    m_re: Vec<Box<RawValue>>,
    m_im: Vec<Box<RawValue>>,
    control_variates: Vec<usize>,
    trials: usize,
    slope: Box<RawValue>,
    intercept: Box<RawValue>,
    slope_threshold: Box<RawValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    variance: Option<Vec<VarianceRow>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    variance_ratios: Option<Vec<Box<RawValue>>>,
}

/// One ensemble per size at the base config's aspect ratio.
fn family(ctx: &Context) -> Result<Vec<CorrelationEnsemble>, CliError> {
    let base = ctx.ensemble_config()?;
    let sizes = ctx
        .config
        .sizes
        .as_ref()
        .ok_or_else(|| CliError::Config("scaling needs `sizes`".into()))?;
    sizes
        .iter()
        .map(|&dim| {
            if (dim * base.n) % base.dim != 0 {
                return Err(CliError::Config(format!(
                    "size {dim} has no integer n at ratio {}/{}",
                    base.dim, base.n
                )));
            }
            Ok(base
                .resized(dim, dim * base.n / base.dim)?
                .build(ctx.base_dir.as_deref())?)
        })
        .collect()
}

pub fn scaling(ctx: &Context) -> Result<(), CliError> {
    let family = family(ctx)?;
    let z = ctx.z([-1.0, 0.0])?;
    let trials = ctx.config.trials.unwrap_or(DEFAULT_BIAS_TRIALS);
    let threshold = ctx
        .config
        .slope_threshold
        .unwrap_or(DEFAULT_SLOPE_THRESHOLD);
    let seed = ctx.seed();
    let rep = sampler::bias_scaling_report(&family, z, trials, seed)?;

    let (variance, variance_ratios) = match &ctx.config.variance {
        Some(vc) => {
            let vz = SpectralPoint::from_parts(vc.z[0], vc.z[1])?;
            let reports = family
                .iter()
                .map(|e| {
                    sampler::variance_scaling(e, &linalg::identity(e.dim()), vz, vc.trials, seed)
                })
                .collect::<gramgap_core::Result<Vec<_>>>()?;
            let ratios = reports
                .windows(2)
                .map(|w| num(w[0].measured_var / w[1].measured_var))
                .collect();
            let rows = family
                .iter()
                .zip(&reports)
                .map(|(e, v)| VarianceRow {
                    dim: e.dim(),
                    n: e.columns(),
                    measured_var: num(v.measured_var),
                    bound: num(v.bound),
                    distance_substituted: v.distance_substituted,
                })
                .collect();
            (Some(rows), Some(ratios))
        }
        None => (None, None),
    };

    let mut csv = String::from("N,bias,stderr\n");
    for ((s, b), se) in rep.sizes.iter().zip(&rep.values).zip(&rep.stderrs) {
        writeln!(csv, "{s},{},{}", fmt(*b), fmt(*se)).unwrap();
    }
    write_text(&ctx.out_dir, "scaling.csv", &csv)?;
    let json = ScalingJson {
        config: ctx.config.echo(seed),
        sizes: rep.sizes.clone(),
        bias: nums(&rep.values),
        stderr: nums(&rep.stderrs),
        m_re: rep.m_values.iter().map(|m| num(m.re)).collect(),
        m_im: rep.m_values.iter().map(|m| num(m.im)).collect(),
        control_variates: rep.degrees.clone(),
        trials,
        slope: num(rep.slope),
        intercept: num(rep.intercept),
        slope_threshold: num(threshold),
        variance,
        variance_ratios,
    };
    write_json(&ctx.out_dir, "scaling.json", &json)?;
    println!("slope {}", fmt(rep.slope));
    rep.check_signal()?;
    if !(rep.slope <= threshold) {
        return Err(CliError::Verification(format!(
            "slope {} exceeds threshold {threshold}",
            rep.slope
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct SelfTestJson {
    seed: u64,
    witnesses: usize,
    witness_violations: usize,
    triples: usize,
    triple_violations: usize,
    jensen_draws: usize,
    jensen_violations: usize,
}

pub fn selftest(ctx: &Context) -> Result<(), CliError> {
    let counts = ctx.config.selftest.clone().unwrap_or_default();
    let SelfTestConfig {
        witnesses,
        triples,
        jensen,
    } = counts;
    let seed = ctx.seed();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = algebra::self_test(&mut rng, witnesses, triples, jensen);
    let json = SelfTestJson {
        seed,
        witnesses: s.witnesses,
        witness_violations: s.witness_violations,
        triples: s.triples,
        triple_violations: s.triple_violations,
        jensen_draws: s.jensen_draws,
        jensen_violations: s.jensen_violations,
    };
    write_json(&ctx.out_dir, "selftest.json", &json)?;
    println!("{} violations", s.violations());
    if s.violations() > 0 {
        return Err(CliError::Verification(format!(
            "{} lemma violations",
            s.violations()
        )));
    }
    Ok(())
}
