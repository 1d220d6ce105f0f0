use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use pseudosieve::characters::primitive_characters;
use pseudosieve::chebotarev::{kappa, partition_holds, pi_counts_batch, write_chebotarev_csv, BoundConstants};
use pseudosieve::cli_io::{parse_config, write_atomic};
use pseudosieve::fields::{count_slope, enumerate_cyclic, write_fields_csv};
use pseudosieve::largesieve::{
    constants, duality_check, dyadic_harness, dyadic_stability, eta, lhs_theorem14, lhs_theorem14_breakdown,
    random_unit_vector, rhs_theorem14, well_spaced_zeros, write_breakdown_csv, ConstantsInput, DyadicInstance,
};
use pseudosieve::lfunc::{locate_zeros_detailed, write_zeros_csv, zero_free_constant, ZeroSearchOptions};
use pseudosieve::sievekit::{detector_identity_check, identity_sweep, write_sweep_csv};
use pseudosieve::torsion::{compare_with_table, read_class_table, torsion_report, write_torsion_csv};
use pseudosieve::{
    CharacterFamily, Complex64, DirichletCharacter, Error, LFunction, PseudoCharacterContext, Rectangle, Report,
    RunConfig, SelbergWeightScheme, SieveParams, SieveReport, SupportMode,
};
use serde::Serialize;
use serde_json::json;

#[derive(Parser, Debug)]
#[command(name = "pseudosieve", version, about = "Pseudo-character large sieve experiments")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// `key = value` configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory (overrides the config).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    #[arg(long, global = true, value_name = "S")]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    mode: Option<Mode>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mode {
    Paper,
    Desk,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Exact pseudo-character identity sweep; writes identities.csv.
    VerifyIdentities(IdentitiesArgs),
    /// Count and locate zeros in M(α,T); writes zeros.csv.
    Zeros(ZerosArgs),
    /// Large-sieve harnesses on the primitive family mod q.
    Sieve(SieveArgs),
    /// Mellin identity for the mollified detector.
    Detector(DetectorArgs),
    /// Closed-form constants and the sieve parameter chain.
    Constants(ConstantsArgs),
    /// Enumerate cyclic fields of prime degree; writes fields.csv.
    FieldsEnumerate(FieldsArgs),
    /// Frobenius class counts; writes chebotarev.csv.
    Chebotarev(ChebotarevArgs),
    /// ℓ-torsion bounds, optionally against a class group table; writes torsion.csv.
    Torsion(TorsionArgs),
}

#[derive(Args, Debug, Serialize)]
struct IdentitiesArgs {
    #[arg(long)]
    modulus: u64,
    #[arg(long, default_value_t = 200)]
    r_max: u64,
    #[arg(long, default_value_t = 10_000)]
    n_max: u64,
    /// Index into the primitive characters mod q.
    #[arg(long, default_value_t = 0)]
    character: usize,
}

#[derive(Args, Debug, Serialize)]
struct ZerosArgs {
    #[arg(long)]
    modulus: u64,
    /// Index into the primitive characters mod q; all of them if omitted.
    #[arg(long)]
    character: Option<usize>,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long, default_value_t = 10.0)]
    t: f64,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum SieveKind {
    /// Dyadic form with duality and stability checks.
    Dyadic,
    /// Zero-weighted form over located, well-spaced zeros.
    Zeros,
}

#[derive(Args, Debug, Serialize)]
struct SieveArgs {
    #[arg(long)]
    modulus: u64,
    #[arg(long, value_enum, default_value_t = SieveKind::Dyadic)]
    kind: SieveKind,
    #[arg(long, default_value_t = 15)]
    r_max: u64,
    #[arg(long, default_value_t = 50)]
    n_prime: u64,
    #[arg(long, default_value_t = 1.5)]
    tau: f64,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[arg(long, default_value_t = 10.0)]
    t: f64,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    /// Coefficient length for the zero-weighted form.
    #[arg(long, default_value_t = 1000)]
    n_max: u64,
    /// Also write the per-(f,r) contributions to sieve_breakdown.csv.
    #[arg(long)]
    breakdown: bool,
}

#[derive(Args, Debug, Serialize)]
struct DetectorArgs {
    #[arg(long)]
    modulus: u64,
    #[arg(long, default_value_t = 0)]
    character: usize,
    #[arg(long, default_value_t = 1)]
    r: u64,
    #[arg(long, default_value_t = 0.75)]
    rho_re: f64,
    #[arg(long, default_value_t = 1.0)]
    rho_im: f64,
    #[arg(long = "big-x", default_value_t = 50.0)]
    big_x: f64,
    #[arg(long, default_value_t = 2.0)]
    w: f64,
    #[arg(long, default_value_t = 5.0)]
    y: f64,
    /// Height `T`; the cutoff uses `qT`.
    #[arg(long, default_value_t = 10.0)]
    t: f64,
    #[arg(long, default_value_t = 40.0)]
    height: f64,
}

#[derive(Args, Debug, Serialize)]
struct ConstantsArgs {
    #[arg(long)]
    n: f64,
    #[arg(long)]
    nk: f64,
    #[arg(long = "A")]
    a: f64,
    #[arg(long)]
    d: f64,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    t: Option<f64>,
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, default_value_t = 2.0)]
    tau: f64,
}

#[derive(Args, Debug, Serialize)]
struct FieldsArgs {
    #[arg(long, default_value_t = 3)]
    degree: u64,
    /// Discriminant bound.
    #[arg(long)]
    x: f64,
    /// Comma-separated discriminant grid for the count exponent fit.
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
}

#[derive(Args, Debug, Serialize)]
struct ChebotarevArgs {
    #[arg(long, default_value_t = 3)]
    degree: u64,
    /// Discriminant bound for the field corpus.
    #[arg(long)]
    disc_max: f64,
    /// Prime-counting cutoff.
    #[arg(long, default_value_t = 1e6)]
    x: f64,
    /// Normalized error threshold for the summary share.
    #[arg(long, default_value_t = 0.05)]
    threshold: f64,
}

#[derive(Args, Debug, Serialize)]
struct TorsionArgs {
    #[arg(long, default_value_t = 3)]
    degree: u64,
    #[arg(long)]
    disc_max: f64,
    #[arg(long, default_value_t = 2)]
    ell: u64,
    /// Split-prime exponent; defaults to the config `delta`.
    #[arg(long)]
    delta: Option<f64>,
    /// Class group CSV to compare against.
    #[arg(long)]
    table: Option<PathBuf>,
}

/// Failures mapped to exit codes: bad input is 2, a failed check is 1.
enum Failure {
    Usage(anyhow::Error),
    Numeric(anyhow::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Pole | Error::Precision(_) | Error::Contour(_) | Error::Overflow(_) => Failure::Numeric(e.into()),
            _ => Failure::Usage(e.into()),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast::<Error>() {
            Ok(e) => e.into(),
            Err(e) => Failure::Usage(e),
        }
    }
}

type Outcome = Result<bool, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("check failed; see the report");
            ExitCode::from(1)
        }
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Numeric(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn resolve_config(g: &Global) -> anyhow::Result<RunConfig> {
    let (mut cfg, file_threads) = match &g.config {
        Some(p) => parse_config(p).with_context(|| format!("reading {}", p.display()))?,
        None => (RunConfig::default(), None),
    };
    if let Some(o) = &g.out {
        cfg.out = o.clone();
    }
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(m) = g.mode {
        cfg.mode = match m {
            Mode::Paper => SupportMode::Paper,
            Mode::Desk => SupportMode::Desk,
        };
    }
    if let Some(n) = g.threads.or(file_threads) {
        if n == 0 {
            bail!("--threads must be positive");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("thread pool")?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Outcome {
    let cfg = resolve_config(&cli.global)?;
    match &cli.command {
        Command::VerifyIdentities(a) => verify_identities(&cfg, a),
        Command::Zeros(a) => zeros(&cfg, a),
        Command::Sieve(a) => sieve(&cfg, a),
        Command::Detector(a) => detector(&cfg, a),
        Command::Constants(a) => constants_cmd(&cfg, a),
        Command::FieldsEnumerate(a) => fields_enumerate(&cfg, a),
        Command::Chebotarev(a) => chebotarev(&cfg, a),
        Command::Torsion(a) => torsion(&cfg, a),
    }
}

fn csv_bytes<F>(f: F) -> Result<Vec<u8>, Failure>
where
    F: FnOnce(&mut Vec<u8>) -> pseudosieve::Result<()>,
{
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

/// Writes every artifact, then the JSON report, each atomically.
fn emit<T: Serialize, A: Serialize>(
    cfg: &RunConfig,
    command: &str,
    args: &A,
    passed: bool,
    result: T,
    files: Vec<(&str, Vec<u8>)>,
) -> Outcome {
    let dir: &Path = &cfg.out;
    for (name, bytes) in files {
        write_atomic(&dir.join(name), &bytes)?;
    }
    let args = serde_json::to_value(args).map_err(|e| Failure::Usage(e.into()))?;
    let report = Report::new(command, cfg, args, passed, result);
    let path = dir.join(format!("{command}.json"));
    write_atomic(&path, &report.to_json()?)?;
    println!("{}", path.display());
    Ok(passed)
}

fn pick_character(q: u64, index: usize) -> Result<DirichletCharacter, Failure> {
    let mut chars = primitive_characters(q)?;
    if chars.is_empty() {
        return Err(Failure::Usage(anyhow!("no primitive characters mod {q}")));
    }
    if index >= chars.len() {
        return Err(Failure::Usage(anyhow!(
            "character index {index} out of range (mod {q} has {})",
            chars.len()
        )));
    }
    Ok(chars.swap_remove(index))
}

fn verify_identities(cfg: &RunConfig, a: &IdentitiesArgs) -> Outcome {
    let chi = pick_character(a.modulus, a.character)?;
    let label = chi.label();
    let ctx = PseudoCharacterContext::new(chi, cfg.delta, cfg.z, a.r_max)?;
    let reports = identity_sweep(&ctx, a.n_max)?;
    let failed: Vec<(u64, u64)> = reports.iter().filter(|r| !r.passed()).map(|r| (r.r, r.t)).collect();
    let csv = csv_bytes(|w| write_sweep_csv(w, &reports))?;
    let result = json!({
        "character": label,
        "admissible_r": ctx.admissible_r_set(),
        "pairs": reports.len(),
        "failed_pairs": failed,
    });
    emit(
        cfg,
        "verify-identities",
        a,
        failed.is_empty(),
        result,
        vec![("identities.csv", csv)],
    )
}

#[derive(Serialize)]
struct ZeroSummary {
    character: String,
    count: u64,
    located: usize,
    left_edge: f64,
    t_used: f64,
    nudged: bool,
    eta: f64,
    zero_free_constant: Option<f64>,
}

fn zeros(cfg: &RunConfig, a: &ZerosArgs) -> Outcome {
    let rect = Rectangle::new(a.alpha, a.t)?;
    let chars = match a.character {
        Some(i) => vec![pick_character(a.modulus, i)?],
        None => primitive_characters(a.modulus)?,
    };
    if chars.is_empty() {
        return Err(Failure::Usage(anyhow!("no primitive characters mod {}", a.modulus)));
    }
    let opts = ZeroSearchOptions {
        enclosure: cfg.enclosure,
        ..Default::default()
    };
    let h = eta(a.modulus as f64, a.t.max(1.0), cfg.c)?;
    let mut all = Vec::new();
    let mut summary = Vec::new();
    for chi in &chars {
        let (count, zs) = locate_zeros_detailed(&LFunction::new(chi), rect, &opts)?;
        summary.push(ZeroSummary {
            character: chi.label(),
            count: count.count,
            located: zs.len(),
            left_edge: count.left_edge,
            t_used: count.t_used,
            nudged: count.nudged,
            eta: h,
            zero_free_constant: zero_free_constant(&zs, chi.conductor()),
        });
        all.extend(zs);
    }
    let passed = summary.iter().all(|s| s.count == s.located as u64);
    let csv = csv_bytes(|w| write_zeros_csv(w, &all))?;
    emit(cfg, "zeros", a, passed, summary, vec![("zeros.csv", csv)])
}

fn sieve(cfg: &RunConfig, a: &SieveArgs) -> Outcome {
    let family = CharacterFamily::primitive(a.modulus)?;
    if family.members.is_empty() {
        return Err(Failure::Usage(anyhow!("no primitive characters mod {}", a.modulus)));
    }
    let params = SieveParams {
        q: a.modulus as f64,
        t: a.t,
        r: a.r_max,
        delta: cfg.delta,
        z: cfg.z,
        eps0: cfg.eps[0],
        n: 1.0,
        a: 1.0,
        d: 1.0,
        alpha: a.alpha,
    };
    let mut rng = cfg.rng();
    match a.kind {
        SieveKind::Dyadic => {
            let inst = DyadicInstance::new(&family, a.r_max, cfg.delta, cfg.z, a.n_prime, a.tau)?;
            let coeffs = random_unit_vector(inst.rows(), &mut rng);
            let report = dyadic_harness(&family, &coeffs, a.tau, a.n_prime, &params)?;
            let stability = dyadic_stability(&inst, &params, a.trials, cfg.seed);
            let duality = duality_check(&inst, cfg.seed, cfg.power_tol, a.trials);
            let passed = duality.converged && duality.relative_gap < 0.05;
            let mut files = Vec::new();
            if a.breakdown {
                let parts = inst.contributions(&coeffs);
                files.push(("sieve_breakdown.csv", csv_bytes(|w| write_breakdown_csv(w, &parts))?));
            }
            let result = json!({ "report": report, "stability": stability, "duality": duality });
            emit(cfg, "sieve", a, passed, result, files)
        }
        SieveKind::Zeros => {
            let rect = Rectangle::new(a.alpha, a.t)?;
            let h = eta(params.q, a.t, cfg.c)?;
            let opts = ZeroSearchOptions {
                enclosure: cfg.enclosure,
                ..Default::default()
            };
            let mut selections = Vec::new();
            for chi in &family.members {
                let (_, zs) = locate_zeros_detailed(&LFunction::new(chi), rect, &opts)?;
                selections.push(well_spaced_zeros(&zs, rect, h)?);
            }
            let coeffs = random_unit_vector(a.n_max as usize, &mut rng);
            let lhs = lhs_theorem14(&family, &selections, &coeffs, &params, cfg.mode)?;
            let rhs = rhs_theorem14(&coeffs, params.q, a.t, a.n_max as f64, a.r_max as f64, a.alpha)?;
            let m = params.big_m()?;
            let report = SieveReport {
                lhs,
                rhs,
                ratio: if rhs > 0.0 { lhs / rhs } else { 0.0 },
                params: pseudosieve::largesieve::SieveReportParams {
                    q: params.q,
                    t: Some(a.t),
                    r: a.r_max,
                    n: Some(a.n_max as f64),
                    n_prime: None,
                    tau: None,
                    m: Some(m),
                    m_prime: None,
                    delta: cfg.delta,
                    eps0: cfg.eps[0],
                    alpha: Some(a.alpha),
                },
                above_threshold: a.n_max as f64 > m,
                mode: cfg.mode,
            };
            let mut files = Vec::new();
            if a.breakdown {
                let parts = lhs_theorem14_breakdown(&family, &selections, &coeffs, &params)?;
                files.push(("sieve_breakdown.csv", csv_bytes(|w| write_breakdown_csv(w, &parts))?));
            }
            let zeros_used: Vec<usize> = selections.iter().map(|s| s.chosen.len()).collect();
            let result = json!({ "report": report, "eta": h, "zeros_used": zeros_used });
            emit(cfg, "sieve", a, true, result, files)
        }
    }
}

fn detector(cfg: &RunConfig, a: &DetectorArgs) -> Outcome {
    let chi = pick_character(a.modulus, a.character)?;
    let ctx = PseudoCharacterContext::new(chi, cfg.delta, cfg.z, a.r.max(1))?;
    let scheme = SelbergWeightScheme::with_big_x(a.w, a.y, a.big_x, a.modulus as f64 * a.t)?;
    let rep = detector_identity_check(&ctx, a.r, Complex64::new(a.rho_re, a.rho_im), &scheme, a.height)?;
    let passed = rep.residual < cfg.identity_tol;
    emit(cfg, "detector", a, passed, rep, vec![])
}

fn constants_cmd(cfg: &RunConfig, a: &ConstantsArgs) -> Outcome {
    let inp = ConstantsInput {
        n: a.n,
        n_k: a.nk,
        a: a.a,
        d: a.d,
        q: a.q,
        t: a.t,
        r: a.r,
        alpha: a.alpha,
        eps: cfg.eps,
        tau: a.tau,
        c: cfg.c,
    };
    let out = constants(&inp)?;
    emit(cfg, "constants", a, true, out, vec![])
}

fn fields_enumerate(cfg: &RunConfig, a: &FieldsArgs) -> Outcome {
    let fields = enumerate_cyclic(a.degree, a.x)?;
    let slope = match &a.grid {
        Some(g) => Some(count_slope(a.degree, g)?),
        None => None,
    };
    let csv = csv_bytes(|w| write_fields_csv(w, &fields))?;
    let result = json!({ "count": fields.len(), "slope": slope });
    emit(cfg, "fields-enumerate", a, true, result, vec![("fields.csv", csv)])
}

fn chebotarev(cfg: &RunConfig, a: &ChebotarevArgs) -> Outcome {
    let fields = enumerate_cyclic(a.degree, a.disc_max)?;
    let n = a.degree as f64;
    let chain = kappa(n, 1.0, n, cfg.epsilon)?;
    let consts = BoundConstants {
        kappa: chain.kappa,
        c3: cfg.c3,
    };
    let reports = pi_counts_batch(&fields, a.x, consts)?;
    let per = a.degree as usize;
    let partition = reports.chunks(per).all(partition_holds);
    let within = reports.iter().filter(|r| r.normalized_error <= a.threshold).count();
    let share = if reports.is_empty() {
        1.0
    } else {
        within as f64 / reports.len() as f64
    };
    let max_error = reports.iter().map(|r| r.normalized_error).fold(0.0, f64::max);
    let csv = csv_bytes(|w| write_chebotarev_csv(w, &reports))?;
    let result = json!({
        "fields": fields.len(),
        "pairs": reports.len(),
        "share_within_threshold": share,
        "max_normalized_error": max_error,
        "partition_holds": partition,
        "kappa": chain,
    });
    emit(cfg, "chebotarev", a, partition, result, vec![("chebotarev.csv", csv)])
}

fn torsion(cfg: &RunConfig, a: &TorsionArgs) -> Outcome {
    let fields = enumerate_cyclic(a.degree, a.disc_max)?;
    let delta = a.delta.unwrap_or(cfg.delta);
    let mut reports = fields
        .iter()
        .map(|k| torsion_report(k, a.ell, delta, cfg.epsilon))
        .collect::<pseudosieve::Result<Vec<_>>>()?;
    let bound_ok = reports.iter().filter(|r| r.m >= 2).all(|r| r.bound < r.trivial_bound);
    let comparison = match &a.table {
        Some(p) => {
            let f = std::fs::File::open(p).with_context(|| format!("opening {}", p.display()))?;
            let table = read_class_table(f)?;
            Some(compare_with_table(&mut reports, &table))
        }
        None => None,
    };
    let csv = csv_bytes(|w| write_torsion_csv(w, &reports))?;
    let result = json!({
        "fields": reports.len(),
        "with_split_primes": reports.iter().filter(|r| r.m >= 2).count(),
        "bound_below_trivial": bound_ok,
        "comparison": comparison.as_ref().map(|c| json!({
            "matched": c.rows.len(),
            "ambiguous": c.ambiguous,
            "unmatched": c.unmatched,
            "max_exponent_ratio": c.max_exponent_ratio,
        })),
    });
    emit(cfg, "torsion", a, bound_ok, result, vec![("torsion.csv", csv)])
}
