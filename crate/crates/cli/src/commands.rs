//! Subcommand implementations. Each returns the process exit code.

use serde::Serialize;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Duration;

use polytraverse::dump::dump_polytopes;
use polytraverse::lp::{CountingSolver, Tolerances};
use polytraverse::network::{
    class_of, load_network, save_network, ActivationCode, LocalLinearModel, NetworkFormat, ReluNetwork,
};
use polytraverse::polytope::BoundedRegion;
use polytraverse::traversal::{traverse as run_traversal, TraversalConfig, TraversalStats, VisitOutcome};
use polytraverse::verifiers::{
    adversarial_binary, adversarial_multiclass, counterfactual, monotonicity, output_range, robustness_check,
    verify_output_property, AttackMode, CounterfactualSpec, CounterfactualStatus, Direction, MonotonicityVerdict, Norm,
    PropertySpec, RobustnessSpec, Verdict, VerifyOptions,
};

use crate::report::{NetworkInfo, RunReport};
use crate::{
    ConvertArgs, DumpArgs, GlobalOpts, NetArgs, TraverseArgs, VerifyArgs, EXIT_INPUT, EXIT_OK, EXIT_SOLVER,
    EXIT_TRUNCATED, EXIT_VIOLATED,
};

#[derive(Debug)]
pub enum CliError {
    Core(polytraverse::Error),
    Io { path: PathBuf, source: std::io::Error },
    Input(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io { path, source } => write!(f, "{}: {source}", path.display()),
            CliError::Input(m) => f.write_str(m),
        }
    }
}

impl From<polytraverse::Error> for CliError {
    fn from(e: polytraverse::Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_solver_error() => EXIT_SOLVER,
            _ => EXIT_INPUT,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => write(p, &format!("{text}\n")),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn format_of(name: Option<&str>, path: &Path) -> Result<NetworkFormat> {
    Ok(match name {
        Some(n) => n.parse()?,
        None => NetworkFormat::from_path(path)?,
    })
}

fn load_net(a: &NetArgs) -> Result<(ReluNetwork, NetworkInfo)> {
    let bytes = read(&a.net)?;
    let net = load_network(&bytes, format_of(a.net_format.as_deref(), &a.net)?)?;
    let info = NetworkInfo::new(&a.net.display().to_string(), &bytes, &net);
    Ok((net, info))
}

fn parse_point(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| CliError::Input(format!("bad number {v:?} in point {s:?}")))
        })
        .collect()
}

fn parse_num<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| CliError::Input(format!("bad {what} {s:?}")))
}

/// A region given as inline JSON or as a path to a JSON file.
fn read_region(s: &str) -> Result<BoundedRegion> {
    let text = if s.trim_start().starts_with('{') {
        s.to_string()
    } else {
        String::from_utf8(read(Path::new(s))?).map_err(|e| CliError::Input(format!("{s}: {e}")))?
    };
    let region: BoundedRegion = serde_json::from_str(&text).map_err(|e| polytraverse::Error::Parse {
        context: "region".into(),
        message: e.to_string(),
    })?;
    region.validate()?;
    Ok(region)
}

fn options(g: &GlobalOpts) -> Result<VerifyOptions> {
    let tolerances = Tolerances {
        interior: g.interior_tol,
        numeric: g.numeric_tol,
        sentinel: g.sentinel,
    };
    tolerances.validate()?;
    let time_budget = match g.time_budget {
        Some(s) if s.is_finite() && s > 0.0 => Some(Duration::from_secs_f64(s)),
        Some(s) => return Err(CliError::Input(format!("time budget must be positive, got {s}"))),
        None => None,
    };
    Ok(VerifyOptions {
        max_polytopes: g.max_polytopes,
        time_budget,
        prescreen: !g.no_prescreen,
        workers: g.workers,
        tolerances,
    })
}

fn to_value<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("results serialize to JSON")
}

fn finish(out: Option<&Path>, report: RunReport) -> Result<i32> {
    let text = serde_json::to_string_pretty(&report).expect("reports serialize to JSON");
    emit(out, &text)?;
    Ok(report.exit_code)
}

#[derive(Serialize)]
struct ModelEntry<'a> {
    code: ActivationCode,
    model: &'a LocalLinearModel,
}

#[derive(Serialize)]
struct TraverseOutput {
    start: Vec<f64>,
    codes: Vec<ActivationCode>,
    truncated: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    models: Option<Vec<serde_json::Value>>,
}

pub fn traverse(g: &GlobalOpts, a: &TraverseArgs, argv: Vec<String>) -> Result<i32> {
    let (net, info) = load_net(&a.net)?;
    let region = read_region(&a.region)?;
    let opts = options(g)?;
    let config = opts.config(region.clone());
    let start = match &a.start {
        Some(s) => parse_point(s)?,
        None => region
            .center(&CountingSolver::new(opts.tolerances))?
            .ok_or_else(|| CliError::Input("the region is empty".into()))?,
    };
    let mut models = Vec::new();
    let run = run_traversal(&net, &start, &config, |p, m| {
        if a.models {
            models.push(to_value(&ModelEntry {
                code: p.code.clone(),
                model: m,
            }));
        }
        Ok(VisitOutcome::Continue)
    })?;
    let exit = if run.truncated { EXIT_TRUNCATED } else { EXIT_OK };
    let output = TraverseOutput {
        start,
        codes: run.codes,
        truncated: run.truncated,
        models: a.models.then_some(models),
    };
    finish(
        a.out.as_deref(),
        RunReport::new(argv, info, config, to_value(&output), run.stats, exit),
    )
}

fn verdict_exit(v: &Verdict) -> i32 {
    match v {
        Verdict::Verified => EXIT_OK,
        Verdict::Violated { .. } => EXIT_VIOLATED,
        Verdict::Truncated => EXIT_TRUNCATED,
    }
}

fn need_region(a: &VerifyArgs) -> Result<BoundedRegion> {
    let s = a
        .region
        .as_deref()
        .ok_or_else(|| CliError::Input("this verification needs --region".into()))?;
    read_region(s)
}

pub fn verify(g: &GlobalOpts, a: &VerifyArgs, argv: Vec<String>) -> Result<i32> {
    let (net, info) = load_net(&a.net)?;
    let opts = options(g)?;
    let m = &a.mode;
    let (config, result, stats, exit): (TraversalConfig, serde_json::Value, TraversalStats, i32) = if let Some(path) =
        &m.property
    {
        let text = String::from_utf8(read(path)?).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let spec = PropertySpec::from_json(&text)?;
        let r = verify_output_property(&net, &spec, &opts)?;
        (
            opts.config(spec.region),
            to_value(&r),
            r.stats.clone(),
            verdict_exit(&r.verdict),
        )
    } else if let Some(args) = &m.robust {
        let mut spec =
            RobustnessSpec::new(parse_point(&args[0])?, parse_num(&args[1], "radius")?).with_threshold(a.threshold);
        match (&a.clip_lower, &a.clip_upper) {
            (Some(lo), Some(hi)) => spec = spec.with_clip(parse_point(lo)?, parse_point(hi)?),
            (None, None) => {
                if let Some(b) = net.input_bounds() {
                    spec = spec.with_clip(b.lower.clone(), b.upper.clone());
                }
            }
            _ => return Err(CliError::Input("--clip-lower and --clip-upper go together".into())),
        }
        let r = robustness_check(&net, &spec, &opts)?;
        (
            opts.config(r.region.clone()),
            to_value(&r),
            r.stats.clone(),
            verdict_exit(&r.verdict),
        )
    } else if let Some(args) = &m.monotone {
        let region = need_region(a)?;
        let feature: usize = parse_num(&args[0], "feature index")?;
        let dir: Direction = args[1].parse()?;
        let r = monotonicity(&net, &region, feature, dir, &opts)?;
        let exit = if r.verdict == MonotonicityVerdict::Truncated {
            EXIT_TRUNCATED
        } else if r.claim_holds {
            EXIT_OK
        } else {
            EXIT_VIOLATED
        };
        (opts.config(region), to_value(&r), r.stats.clone(), exit)
    } else if m.range {
        let region = need_region(a)?;
        let r = output_range(&net, &region, a.output, &opts)?;
        let exit = if r.truncated { EXIT_TRUNCATED } else { EXIT_OK };
        (opts.config(region), to_value(&r), r.stats.clone(), exit)
    } else if let Some(args) = &m.counterfactual {
        let norm: Norm = args[1].parse()?;
        let mut spec = CounterfactualSpec::new(parse_point(&args[0])?, norm).with_threshold(a.threshold);
        let initial = match &a.region {
            Some(s) => {
                let r = read_region(s)?;
                spec = spec.with_region(r.clone());
                r
            }
            None => BoundedRegion::sentinel(net.input_dim(), opts.tolerances.sentinel),
        };
        let r = counterfactual(&net, &spec, &opts)?;
        let exit = match r.status {
            CounterfactualStatus::Truncated => EXIT_TRUNCATED,
            _ => EXIT_OK,
        };
        (opts.config(initial), to_value(&r), r.stats.clone(), exit)
    } else if let Some(args) = &m.attack {
        let region = need_region(a)?;
        let x0 = parse_point(&args[0])?;
        let label: usize = parse_num(&args[1], "label")?;
        if net.output_dim() == 1 {
            let label = u8::try_from(label).map_err(|_| CliError::Input("binary label must be 0 or 1".into()))?;
            let r = adversarial_binary(&net, &x0, &region, label, &opts)?;
            let exit = if r.range.truncated {
                EXIT_TRUNCATED
            } else if class_of(&[r.value], a.threshold) != label as usize {
                EXIT_VIOLATED
            } else {
                EXIT_OK
            };
            (opts.config(region), to_value(&r), r.range.stats.clone(), exit)
        } else {
            let mode = if a.exact { AttackMode::Exact } else { AttackMode::Sound };
            let r = adversarial_multiclass(&net, &x0, &region, label, mode, &opts)?;
            (
                opts.config(region),
                to_value(&r),
                r.stats.clone(),
                verdict_exit(&r.verdict),
            )
        }
    } else {
        return Err(CliError::Input("choose one verification mode".into()));
    };
    finish(
        a.out.as_deref(),
        RunReport::new(argv, info, config, result, stats, exit),
    )
}

pub fn dump(g: &GlobalOpts, a: &DumpArgs) -> Result<i32> {
    let (net, _) = load_net(&a.net)?;
    let region = read_region(&a.region)?;
    let config = options(g)?.config(region);
    let d = dump_polytopes(&net, &config)?;
    let csv = a.csv
        || a.out
            .as_deref()
            .and_then(|p| p.extension())
            .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let text = if csv {
        d.to_csv()
    } else {
        serde_json::to_string_pretty(&d).expect("dumps serialize to JSON")
    };
    emit(a.out.as_deref(), text.trim_end())?;
    Ok(if d.truncated { EXIT_TRUNCATED } else { EXIT_OK })
}

pub fn convert(a: &ConvertArgs) -> Result<i32> {
    let from = format_of(a.from.as_deref(), &a.input)?;
    let to = format_of(a.to.as_deref(), &a.out)?;
    let net = load_network(&read(&a.input)?, from)?;
    write(&a.out, &save_network(&net, to)?)?;
    Ok(EXIT_OK)
}
