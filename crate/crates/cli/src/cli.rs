//! The `ppipower` command line.
//!
//! Exit codes: 0 success, 1 other failures, 2 usage or invalid input,
//! 3 infeasible or unattainable plans, 4 I/O errors.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Map, Value};

use ppipower::{
    kappa_scale, regression_contrast_power, run_experiment, two_by_two_power, ContrastBlocks, DesignInputs,
    Estimator, Measure, Pool, SampleBudget, SimConfig,
};

use crate::api::{
    self, ApiError, CalibrateRequest, MeanRequest, MomentInput, RegressionRequest, TwoByTwoRequest, TwoSampleRequest,
};

pub const EXIT_OTHER: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_INFEASIBLE: u8 = 3;
pub const EXIT_IO: u8 = 4;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliOutput {
    pub code: u8,
    pub stdout: String,
    pub stderr: String,
}

impl CliOutput {
    fn ok(stdout: String) -> Self {
        CliOutput { code: 0, stdout, stderr: String::new() }
    }

    fn fail(code: u8, stderr: String) -> Self {
        CliOutput { code, stdout: String::new(), stderr }
    }
}

#[derive(Debug, Parser)]
#[command(name = "ppipower", version, about = "Power and labeled-sample-size planning for prediction-powered inference")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Smallest labeled sample size reaching the target power.
    N(PlanArgs),
    /// Power at a given labeled sample size.
    Power {
        #[command(flatten)]
        plan: PlanArgs,
        /// Labeled sample size (group A / control for two-group designs).
        #[arg(long)]
        n: u64,
    },
    /// Second moments of (Y, f) from accuracy metrics or a pilot sample.
    Calibrate {
        #[command(flatten)]
        moments: MomentArgs,
        /// Require the binary route (--p, --se, --sp).
        #[arg(long)]
        binary: bool,
        /// Labeled-to-unlabeled ratio n/N; adds the tuning weight to the output.
        #[arg(long)]
        r: Option<f64>,
        #[arg(long)]
        json: bool,
    },
    /// Run a Monte Carlo experiment described by a TOML file.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Override the seed in the config file.
        #[arg(long)]
        seed: Option<u64>,
        /// Write results here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
        /// JSON instead of CSV.
        #[arg(long)]
        json: bool,
    },
    /// Start the HTTP plan service.
    Serve {
        #[arg(long, env = "PPIPOWER_PORT", default_value_t = crate::service::DEFAULT_PORT)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Design {
    OneSample,
    TwoSample,
    Paired,
    TwoByTwo,
    Regression,
}

#[derive(Debug, Clone, Default, Args)]
struct MomentArgs {
    /// Outcome variance σ²_Y.
    #[arg(long)]
    sigma2: Option<f64>,
    /// Held-out R² of the predictor, used as ρ².
    #[arg(long)]
    rho2: Option<f64>,
    /// Predictor mean squared error (conservative).
    #[arg(long)]
    mse: Option<f64>,
    /// Outcome prevalence (binary outcome).
    #[arg(long)]
    p: Option<f64>,
    /// Classifier sensitivity.
    #[arg(long)]
    se: Option<f64>,
    /// Classifier specificity.
    #[arg(long)]
    sp: Option<f64>,
    #[arg(long = "var-f")]
    var_f: Option<f64>,
    #[arg(long)]
    cov: Option<f64>,
    /// Pilot CSV with header `y,f`.
    #[arg(long)]
    pilot: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
struct PlanArgs {
    #[arg(long, value_enum, default_value = "one-sample")]
    design: Design,
    #[command(flatten)]
    moments: MomentArgs,
    /// Unlabeled pool size; omit for an unlimited pool.
    #[arg(long = "N")]
    big_n: Option<u64>,
    /// Group B unlabeled pool (two-sample).
    #[arg(long = "N-b")]
    big_n_b: Option<u64>,
    /// Labeled allocation ratio n_B/n_A (two-group designs).
    #[arg(long, default_value_t = 1.0)]
    kappa: f64,
    /// Group B outcome variance, when it differs from group A.
    #[arg(long = "sigma2-b")]
    sigma2_b: Option<f64>,
    /// Group B R², when it differs from group A.
    #[arg(long = "rho2-b")]
    rho2_b: Option<f64>,
    #[arg(long)]
    p0: Option<f64>,
    #[arg(long)]
    p1: Option<f64>,
    #[arg(long)]
    rho0: Option<f64>,
    #[arg(long)]
    rho1: Option<f64>,
    #[arg(long, value_parser = parse_measure)]
    measure: Option<Measure>,
    #[arg(long = "v-yy")]
    v_yy: Option<f64>,
    #[arg(long = "v-ff")]
    v_ff: Option<f64>,
    #[arg(long = "v-yf")]
    v_yf: Option<f64>,
    /// Effect size Δ.
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Target power.
    #[arg(long, default_value_t = 0.8)]
    power: f64,
    #[arg(long, value_parser = parse_method, default_value = "ppi++")]
    method: Estimator,
    /// Print the response as JSON.
    #[arg(long, conflicts_with = "csv")]
    json: bool,
    /// Print the power curve as CSV.
    #[arg(long)]
    csv: bool,
}

fn parse_method(s: &str) -> Result<Estimator, String> {
    serde_json::from_value(Value::String(s.to_ascii_lowercase()))
        .map_err(|_| format!("unknown method `{s}`; use classical, vanilla (ppi) or ppi++"))
}

fn parse_measure(s: &str) -> Result<Measure, String> {
    serde_json::from_value(Value::String(s.to_ascii_uppercase())).map_err(|_| format!("unknown measure `{s}`; use RR or OR"))
}

enum Failure {
    Api(ApiError),
    Io(String),
}

impl From<ApiError> for Failure {
    fn from(e: ApiError) -> Self {
        Failure::Api(e)
    }
}

impl From<ppipower::Error> for Failure {
    fn from(e: ppipower::Error) -> Self {
        Failure::Api(e.into())
    }
}

fn missing(field: &str) -> ApiError {
    ApiError::field(field, format!("--{} is required for this design", field.replace('_', "-")))
}

fn read_file(path: &PathBuf) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Io(format!("reading {}: {e}", path.display())))
}

impl MomentArgs {
    fn to_input(&self) -> Result<MomentInput, Failure> {
        let pilot_csv = match &self.pilot {
            Some(path) => Some(read_file(path)?),
            None => None,
        };
        Ok(MomentInput {
            sigma2: self.sigma2,
            rho2: self.rho2,
            mse: self.mse,
            p: self.p,
            se: self.se,
            sp: self.sp,
            var_f: self.var_f,
            cov: self.cov,
            pilot_csv,
        })
    }
}

impl PlanArgs {
    fn delta(&self) -> Result<f64, ApiError> {
        self.delta.ok_or_else(|| missing("delta"))
    }

    fn mean_request(&self) -> Result<MeanRequest, Failure> {
        Ok(MeanRequest {
            moments: self.moments.to_input()?,
            big_n: self.big_n,
            delta: self.delta()?,
            alpha: self.alpha,
            power: self.power,
            method: self.method,
        })
    }

    fn two_sample_request(&self) -> Result<TwoSampleRequest, Failure> {
        let moments = self.moments.to_input()?;
        let group_b = if self.sigma2_b.is_some() || self.rho2_b.is_some() {
            Some(MomentInput {
                sigma2: self.sigma2_b.or(moments.sigma2),
                rho2: self.rho2_b.or(moments.rho2),
                ..MomentInput::default()
            })
        } else {
            None
        };
        Ok(TwoSampleRequest {
            moments,
            group_b,
            big_n: self.big_n,
            big_n_b: self.big_n_b,
            kappa: self.kappa,
            delta: self.delta()?,
            alpha: self.alpha,
            power: self.power,
            method: self.method,
        })
    }

    fn two_by_two_request(&self) -> Result<TwoByTwoRequest, Failure> {
        Ok(TwoByTwoRequest {
            p0: self.p0.ok_or_else(|| missing("p0"))?,
            p1: self.p1.ok_or_else(|| missing("p1"))?,
            rho0: self.rho0,
            rho1: self.rho1,
            se: self.moments.se,
            sp: self.moments.sp,
            kappa: self.kappa,
            measure: self.measure.ok_or_else(|| missing("measure"))?,
            alpha: self.alpha,
            power: self.power,
            method: self.method,
        })
    }

    fn regression_request(&self) -> Result<RegressionRequest, Failure> {
        Ok(RegressionRequest {
            v_yy: self.v_yy.ok_or_else(|| missing("v_yy"))?,
            v_ff: self.v_ff.ok_or_else(|| missing("v_ff"))?,
            v_yf: self.v_yf.ok_or_else(|| missing("v_yf"))?,
            big_n: self.big_n,
            delta: self.delta()?,
            alpha: self.alpha,
            power: self.power,
            method: self.method,
        })
    }

    fn plan(&self) -> Result<Value, Failure> {
        let response = match self.design {
            Design::OneSample => api::plan_mean_request(&self.mean_request()?)?,
            Design::Paired => api::plan_paired_request(&self.mean_request()?)?,
            Design::TwoSample => api::plan_two_sample_request(&self.two_sample_request()?)?,
            Design::TwoByTwo => api::plan_two_by_two_request(&self.two_by_two_request()?)?,
            Design::Regression => api::plan_regression_request(&self.regression_request()?)?,
        };
        Ok(serde_json::to_value(response).expect("responses serialize"))
    }

    fn power_at(&self, n: u64) -> Result<Value, Failure> {
        if n == 0 {
            return Err(ApiError::field("n", "labeled sample size must be at least 1").into());
        }
        let method = self.method;
        let (design, n_b, power) = match self.design {
            Design::OneSample | Design::Paired => {
                let req = self.mean_request()?;
                let m = req.moments.resolve()?;
                let pool = pool(req.big_n)?;
                let d = DesignInputs::new(req.alpha, req.power, req.delta)?;
                let name = if self.design == Design::Paired { "paired" } else { "mean" };
                (name, None, api::mean_power(&m, pool, &d, method, n))
            }
            Design::TwoSample => {
                let req = self.two_sample_request()?;
                let t = api::two_sample_design(&req)?;
                let d = DesignInputs::new(req.alpha, req.power, req.delta)?;
                ("two-sample", Some(t.n_b(n)), t.power(n, &d, method))
            }
            Design::TwoByTwo => {
                let req = self.two_by_two_request()?;
                api::only_ppi_pp(method)?;
                let s = api::two_by_two_spec(&req)?;
                DesignInputs::new(req.alpha, req.power, 1.0)?;
                let n1 = kappa_scale(s.kappa, n);
                ("two-by-two", Some(n1), two_by_two_power(&s, n, n1, req.alpha)?)
            }
            Design::Regression => {
                let req = self.regression_request()?;
                api::only_ppi_pp(method)?;
                let c = ContrastBlocks::new(req.v_yy, req.v_ff, req.v_yf)?;
                let pool = pool(req.big_n)?;
                let d = DesignInputs::new(req.alpha, req.power, req.delta)?;
                ("regression", None, regression_contrast_power(&c, &SampleBudget::continuous(n as f64, pool), &d))
            }
        };
        let mut out = Map::new();
        out.insert("design".into(), json!(design));
        out.insert("method".into(), json!(method));
        out.insert("n".into(), json!(n));
        if let Some(n_b) = n_b {
            out.insert("n_other".into(), json!(n_b));
        }
        out.insert("power".into(), json!(power));
        Ok(Value::Object(out))
    }
}

fn pool(big_n: Option<u64>) -> Result<Pool, ApiError> {
    match big_n {
        Some(0) => Err(ApiError::field("N", "unlabeled pool must hold at least one observation")),
        Some(n) => Ok(Pool::Finite(n)),
        None => Ok(Pool::Unbounded),
    }
}

/// `%g`-style formatting with six significant digits.
pub fn format_g(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let exp = v.abs().log10().floor() as i32;
    let trim = |s: String| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    };
    if !(-4..6).contains(&exp) {
        let s = format!("{v:.5e}");
        let (mantissa, e) = s.split_once('e').expect("exponent form");
        let e: i32 = e.parse().expect("integer exponent");
        return format!("{}e{}{:02}", trim(mantissa.to_string()), if e < 0 { '-' } else { '+' }, e.abs());
    }
    let decimals = (5 - exp).max(0) as usize;
    trim(format!("{v:.decimals$}"))
}

fn scalar(v: &Value) -> Option<String> {
    match v {
        Value::Null => None,
        Value::Bool(b) => Some(b.to_string()),
        Value::Number(n) => Some(match n.as_u64().or_else(|| n.as_i64().map(|i| i as u64)) {
            Some(_) if n.is_u64() || n.is_i64() => n.to_string(),
            _ => format_g(n.as_f64().unwrap_or(f64::NAN)),
        }),
        Value::String(s) => Some(s.clone()),
        Value::Array(items) => Some(items.iter().filter_map(scalar).collect::<Vec<_>>().join(",")),
        Value::Object(_) => None,
    }
}

/// `key=value` lines for the scalar members of a response.
fn key_values(v: &Value) -> String {
    let mut out = String::new();
    if let Value::Object(map) = v {
        for (k, val) in map {
            if k == "curve" || k == "inputs" {
                continue;
            }
            if let Some(s) = scalar(val) {
                out.push_str(&format!("{k}={s}\n"));
            }
        }
    }
    out
}

fn curve_csv(v: &Value) -> String {
    let mut out = String::from("n,power\n");
    for p in v["curve"].as_array().into_iter().flatten() {
        out.push_str(&format!("{},{}\n", p["n"], format_g(p["power"].as_f64().unwrap_or(f64::NAN))));
    }
    out
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json values serialize");
    s.push('\n');
    s
}

fn run(command: Command) -> Result<String, Failure> {
    match command {
        Command::N(args) => {
            let v = args.plan()?;
            Ok(if args.json {
                pretty(&v)
            } else if args.csv {
                curve_csv(&v)
            } else {
                key_values(&v)
            })
        }
        Command::Power { plan, n } => {
            let v = plan.power_at(n)?;
            Ok(if plan.json { pretty(&v) } else { key_values(&v) })
        }
        Command::Calibrate { moments, binary, r, json } => {
            if binary {
                for (v, name) in [(moments.p, "p"), (moments.se, "se"), (moments.sp, "sp")] {
                    if v.is_none() {
                        return Err(ApiError::field(name, format!("--{name} is required with --binary")).into());
                    }
                }
            }
            let resp = api::calibrate_request(&CalibrateRequest { moments: moments.to_input()?, r })?;
            let v = serde_json::to_value(resp).expect("responses serialize");
            Ok(if json { pretty(&v) } else { key_values(&v) })
        }
        Command::Simulate { config, seed, out, json } => {
            let text = read_file(&config)?;
            let mut cfg = SimConfig::from_toml_str(&text)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let result = run_experiment(&cfg)?;
            let body = if json {
                pretty(&serde_json::to_value(&result).expect("results serialize"))
            } else {
                result.to_csv_string()
            };
            match out {
                Some(path) => {
                    std::fs::write(&path, body).map_err(|e| Failure::Io(format!("writing {}: {e}", path.display())))?;
                    Ok(String::new())
                }
                None => Ok(body),
            }
        }
        Command::Serve { port, host } => {
            let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure::Io(e.to_string()))?;
            runtime.block_on(async {
                let listener = tokio::net::TcpListener::bind((host.as_str(), port))
                    .await
                    .map_err(|e| Failure::Io(format!("binding {host}:{port}: {e}")))?;
                eprintln!("listening on {}", listener.local_addr().map_err(|e| Failure::Io(e.to_string()))?);
                crate::service::serve(listener).await.map_err(|e| Failure::Io(e.to_string()))
            })?;
            Ok(String::new())
        }
    }
}

/// Parse `argv` (including the program name) and run the command.
pub fn run_cli<I, T>(argv: I) -> CliOutput
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() { CliOutput::fail(EXIT_USAGE, text) } else { CliOutput::ok(text) };
        }
    };
    match run(cli.command) {
        Ok(stdout) => CliOutput::ok(stdout),
        Err(Failure::Io(msg)) => CliOutput::fail(EXIT_IO, format!("error: {msg}\n")),
        Err(Failure::Api(e)) => {
            let code = match (e.status, e.code.as_str()) {
                (422, _) => EXIT_INFEASIBLE,
                (400, "singular" | "not_converged") => EXIT_OTHER,
                (400, _) => EXIT_USAGE,
                _ => EXIT_OTHER,
            };
            let mut msg = format!("error[{}]: {}", e.code, e.message);
            if let Some(min_pool) = e.min_pool {
                msg.push_str(&format!(" (min_pool={min_pool})"));
            }
            msg.push('\n');
            CliOutput::fail(code, msg)
        }
    }
}
