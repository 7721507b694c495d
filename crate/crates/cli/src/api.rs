//! Request and response types shared by the HTTP service and the CLI.
//!
//! Every endpoint is a pure function of its JSON body. The CLI builds the same
//! request structs from its flags, so `--json` output and service responses
//! are produced by the same code.

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use ppipower::{
    calibrate_binary, calibrate_continuous, classical_power, estimate_moments, kappa_scale, plan_mean,
    regression_contrast_n, regression_contrast_power, rule_of_thumb, two_by_two_n, two_by_two_power, two_sample_n,
    vanilla_power, BinaryMetrics, ContinuousMetric, ContrastBlocks, DesignInputs, Error, Estimator, Measure,
    MomentSet, PilotSample, PlanResult, Pool, SampleBudget, TwoByTwoSpec, TwoSampleDesign,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Number of points in a response power curve.
pub const CURVE_POINTS: u64 = 100;

fn default_alpha() -> f64 {
    0.05
}
fn default_power() -> f64 {
    0.8
}
fn default_kappa() -> f64 {
    1.0
}
fn default_method() -> Estimator {
    Estimator::PpiPlusPlus
}

/// An error with the HTTP status it maps to.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: u16,
    pub code: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub row: Option<usize>,
    /// Smallest unlabeled pool that makes an infeasible plan feasible.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_pool: Option<u64>,
}

impl ApiError {
    pub fn new(status: u16, code: &str, message: impl Into<String>) -> Self {
        ApiError { status, code: code.into(), message: message.into(), field: None, row: None, min_pool: None }
    }

    pub fn field(field: &str, message: impl Into<String>) -> Self {
        ApiError { field: Some(field.into()), ..ApiError::new(400, "invalid_input", message) }
    }

    pub fn body(&self) -> Value {
        json!({ "error": self })
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let mut out = ApiError::new(400, e.code(), e.to_string());
        match e {
            Error::InvalidInput { field, .. } => out.field = Some(field.to_string()),
            Error::Csv { row, .. } => {
                out.field = Some("pilot_csv".into());
                out.row = Some(row);
            }
            Error::Infeasible { min_pool, .. } => {
                out.status = 422;
                out.min_pool = Some(min_pool);
            }
            Error::UnattainablePower => {
                out.status = 422;
                out.field = Some("delta".into());
            }
            Error::DegenerateMoment { column } => out.field = Some(column.to_string()),
            _ => {}
        }
        out
    }
}

pub type ApiResult<T> = std::result::Result<T, ApiError>;

/// The ways a request can describe the (Y, f) moments. Exactly one route
/// may be present.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MomentInput {
    /// Outcome variance; required by the rho2, mse and var_f/cov routes.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub se: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sp: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub var_f: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cov: Option<f64>,
    /// Pilot sample as CSV text with header `y,f`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pilot_csv: Option<String>,
}

const MOMENT_FIELDS: &[&str] = &["sigma2", "rho2", "mse", "p", "se", "sp", "var_f", "cov", "pilot_csv"];

fn request_field(core: &str) -> &str {
    match core {
        "var_y" => "sigma2",
        "r2" | "rho" => "rho2",
        "pilot" => "pilot_csv",
        other => other,
    }
}

const ROUTES: &str = "exactly one of rho2 | mse | p,se,sp | var_f,cov | pilot_csv must be given";

impl MomentInput {
    fn need_sigma2(&self, route: &str) -> ApiResult<f64> {
        self.sigma2.ok_or_else(|| ApiError::field("sigma2", format!("sigma2 is required with {route}")))
    }

    fn forbid_sigma2(&self, route: &str) -> ApiResult<()> {
        if self.sigma2.is_some() {
            return Err(ApiError::field("sigma2", format!("sigma2 is implied by {route}; leave it out")));
        }
        Ok(())
    }

    /// Calibrated moments, with error fields named as in the request.
    pub fn resolve(&self) -> ApiResult<MomentSet> {
        self.resolve_inner().map_err(|mut e| {
            e.field = e.field.map(|f| request_field(&f).to_string());
            e
        })
    }

    fn resolve_inner(&self) -> ApiResult<MomentSet> {
        let binary = self.p.is_some() || self.se.is_some() || self.sp.is_some();
        let explicit = self.var_f.is_some() || self.cov.is_some();
        let active = [self.rho2.is_some(), self.mse.is_some(), binary, explicit, self.pilot_csv.is_some()];
        let first = MOMENT_FIELDS[1..].iter().find(|f| self.has(f)).copied().unwrap_or("rho2");
        if active.iter().filter(|&&a| a).count() != 1 {
            return Err(ApiError::field(first, ROUTES));
        }
        let m = if let Some(r2) = self.rho2 {
            calibrate_continuous(self.need_sigma2("rho2")?, ContinuousMetric::R2(r2))?
        } else if let Some(mse) = self.mse {
            calibrate_continuous(self.need_sigma2("mse")?, ContinuousMetric::Mse(mse))?
        } else if binary {
            self.forbid_sigma2("p")?;
            let get = |v: Option<f64>, name: &str| {
                v.ok_or_else(|| ApiError::field(name, format!("{name} is required with the p,se,sp route")))
            };
            calibrate_binary(BinaryMetrics::new(get(self.p, "p")?, get(self.se, "se")?, get(self.sp, "sp")?))?
        } else if explicit {
            let var_y = self.need_sigma2("var_f,cov")?;
            let var_f = self.var_f.ok_or_else(|| ApiError::field("var_f", "var_f is required with cov"))?;
            let cov = self.cov.ok_or_else(|| ApiError::field("cov", "cov is required with var_f"))?;
            MomentSet::new(var_y, var_f, cov)?
        } else {
            self.forbid_sigma2("pilot_csv")?;
            let text = self.pilot_csv.as_deref().unwrap_or_default();
            estimate_moments(&PilotSample::from_csv(text.as_bytes())?)?
        };
        Ok(m)
    }

    fn has(&self, field: &str) -> bool {
        match field {
            "sigma2" => self.sigma2.is_some(),
            "rho2" => self.rho2.is_some(),
            "mse" => self.mse.is_some(),
            "p" => self.p.is_some(),
            "se" => self.se.is_some(),
            "sp" => self.sp.is_some(),
            "var_f" => self.var_f.is_some(),
            "cov" => self.cov.is_some(),
            "pilot_csv" => self.pilot_csv.is_some(),
            _ => false,
        }
    }
}

/// POST /v1/plan/mean and /v1/plan/paired. For paired designs the moments
/// describe the within-pair differences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanRequest {
    #[serde(flatten)]
    pub moments: MomentInput,
    /// Unlabeled pool size; omitted means N → ∞.
    #[serde(rename = "N", skip_serializing_if = "Option::is_none")]
    pub big_n: Option<u64>,
    pub delta: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_power")]
    pub power: f64,
    #[serde(default = "default_method")]
    pub method: Estimator,
}

/// POST /v1/plan/two-sample. `group_b` overrides the moments of group B,
/// which otherwise equal those of group A.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoSampleRequest {
    #[serde(flatten)]
    pub moments: MomentInput,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub group_b: Option<MomentInput>,
    /// Unlabeled pool of group A (and of group B unless `N_b` is given).
    #[serde(rename = "N", skip_serializing_if = "Option::is_none")]
    pub big_n: Option<u64>,
    #[serde(rename = "N_b", skip_serializing_if = "Option::is_none")]
    pub big_n_b: Option<u64>,
    /// n_B / n_A.
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    pub delta: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_power")]
    pub power: f64,
    #[serde(default = "default_method")]
    pub method: Estimator,
}

/// POST /v1/plan/two-by-two. Give either the outcome–prediction
/// correlations (rho0, rho1) or classifier metrics (se, sp).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoByTwoRequest {
    pub p0: f64,
    pub p1: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub se: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sp: Option<f64>,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    pub measure: Measure,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_power")]
    pub power: f64,
    #[serde(default = "default_method")]
    pub method: Estimator,
}

/// POST /v1/plan/regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegressionRequest {
    pub v_yy: f64,
    pub v_ff: f64,
    pub v_yf: f64,
    #[serde(rename = "N", skip_serializing_if = "Option::is_none")]
    pub big_n: Option<u64>,
    pub delta: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_power")]
    pub power: f64,
    #[serde(default = "default_method")]
    pub method: Estimator,
}

/// POST /v1/calibrate. `r` = n/N, when given, adds the tuning weight
/// λ = Cov/((1 + r)σ²_f).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrateRequest {
    #[serde(flatten)]
    pub moments: MomentInput,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub n: u64,
    pub power: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanResponse {
    pub design: &'static str,
    pub method: Estimator,
    #[serde(flatten)]
    pub plan: PlanResult,
    /// Inputs after calibration and defaulting.
    pub inputs: Value,
    pub curve: Vec<CurvePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrateResponse {
    pub var_y: f64,
    pub var_f: f64,
    pub cov_yf: f64,
    pub rho: f64,
    pub rho2: f64,
    /// Large-pool labeled-count ratio 1 − ρ².
    pub rule_of_thumb: f64,
    pub conservative: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
}

fn pool(big_n: Option<u64>) -> ApiResult<Pool> {
    match big_n {
        Some(0) => Err(ApiError::field("N", "unlabeled pool must hold at least one observation")),
        Some(n) => Ok(Pool::Finite(n)),
        None => Ok(Pool::Unbounded),
    }
}

fn design_inputs(alpha: f64, power: f64, delta: f64) -> ApiResult<DesignInputs> {
    Ok(DesignInputs::new(alpha, power, delta)?)
}

fn moments_json(m: &MomentSet) -> Value {
    json!({
        "var_y": m.var_y,
        "var_f": m.var_f,
        "cov_yf": m.cov_yf,
        "rho2": m.rho2(),
        "conservative": m.conservative,
    })
}

/// Up to `CURVE_POINTS` evenly spaced integers from 1 to max(2·n*, classical n).
pub fn curve_grid(n_star: u64, classical: u64) -> Vec<u64> {
    let hi = (2 * n_star).max(classical).max(1);
    let mut out: Vec<u64> = (0..CURVE_POINTS)
        .map(|i| 1 + ((hi - 1) as f64 * i as f64 / (CURVE_POINTS - 1) as f64).round() as u64)
        .collect();
    out.dedup();
    out
}

fn curve(plan: &PlanResult, power_at: impl Fn(u64) -> f64) -> Vec<CurvePoint> {
    curve_grid(plan.n_star, plan.classical_n).into_iter().map(|n| CurvePoint { n, power: power_at(n) }).collect()
}

/// Two-sided power of a one-sample or paired mean design at `n` labels.
pub fn mean_power(m: &MomentSet, pool: Pool, d: &DesignInputs, method: Estimator, n: u64) -> f64 {
    let b = SampleBudget::continuous(n as f64, pool);
    match method {
        Estimator::Classical => classical_power(n, m.var_y, d),
        Estimator::Vanilla => vanilla_power(m, &b, d),
        Estimator::PpiPlusPlus => ppipower::ppi_pp_power(m, &b, d),
    }
}

fn plan_mean_like(design: &'static str, req: &MeanRequest) -> ApiResult<PlanResponse> {
    let m = req.moments.resolve()?;
    let pool = pool(req.big_n)?;
    let d = design_inputs(req.alpha, req.power, req.delta)?;
    let plan = plan_mean(&m, pool, &d, req.method)?;
    let curve = curve(&plan, |n| mean_power(&m, pool, &d, req.method, n));
    let inputs = json!({
        "moments": moments_json(&m),
        "N": req.big_n,
        "delta": req.delta,
        "alpha": req.alpha,
        "power": req.power,
    });
    Ok(PlanResponse { design, method: req.method, plan, inputs, curve })
}

pub fn plan_mean_request(req: &MeanRequest) -> ApiResult<PlanResponse> {
    plan_mean_like("mean", req)
}

pub fn plan_paired_request(req: &MeanRequest) -> ApiResult<PlanResponse> {
    plan_mean_like("paired", req)
}

pub(crate) fn two_sample_design(req: &TwoSampleRequest) -> ApiResult<TwoSampleDesign> {
    let a = req.moments.resolve()?;
    let b = match &req.group_b {
        Some(g) => g.resolve().map_err(|mut e| {
            e.field = e.field.map(|f| format!("group_b.{f}"));
            e
        })?,
        None => a,
    };
    let pool_a = pool(req.big_n)?;
    let pool_b = match req.big_n_b {
        Some(_) => pool(req.big_n_b).map_err(|e| ApiError { field: Some("N_b".into()), ..e })?,
        None => pool_a,
    };
    let t = TwoSampleDesign { a, b, pool_a, pool_b, kappa: req.kappa };
    t.validate()?;
    Ok(t)
}

pub fn plan_two_sample_request(req: &TwoSampleRequest) -> ApiResult<PlanResponse> {
    let t = two_sample_design(req)?;
    let d = design_inputs(req.alpha, req.power, req.delta)?;
    let plan = two_sample_n(&t, &d, req.method)?;
    let curve = curve(&plan, |n| t.power(n, &d, req.method));
    let inputs = json!({
        "group_a": moments_json(&t.a),
        "group_b": moments_json(&t.b),
        "N": t.pool_a.finite(),
        "N_b": t.pool_b.finite(),
        "kappa": t.kappa,
        "delta": req.delta,
        "alpha": req.alpha,
        "power": req.power,
    });
    Ok(PlanResponse { design: "two-sample", method: req.method, plan, inputs, curve })
}

pub(crate) fn only_ppi_pp(method: Estimator) -> ApiResult<()> {
    if method != Estimator::PpiPlusPlus {
        return Err(ApiError::field("method", "only ppi++ is available for this design"));
    }
    Ok(())
}

pub(crate) fn two_by_two_spec(req: &TwoByTwoRequest) -> ApiResult<TwoByTwoSpec> {
    let by_rho = req.rho0.is_some() || req.rho1.is_some();
    let by_metrics = req.se.is_some() || req.sp.is_some();
    let (rho0, rho1) = match (by_rho, by_metrics) {
        (true, true) | (false, false) => {
            let field = if by_rho { "se" } else { "rho0" };
            return Err(ApiError::field(field, "give either rho0,rho1 or se,sp"));
        }
        (true, false) => (
            req.rho0.ok_or_else(|| ApiError::field("rho0", "rho0 is required with rho1"))?,
            req.rho1.ok_or_else(|| ApiError::field("rho1", "rho1 is required with rho0"))?,
        ),
        (false, true) => {
            let se = req.se.ok_or_else(|| ApiError::field("se", "se is required with sp"))?;
            let sp = req.sp.ok_or_else(|| ApiError::field("sp", "sp is required with se"))?;
            let rho = |p: f64, field: &str| -> ApiResult<f64> {
                let m = calibrate_binary(BinaryMetrics::new(p, se, sp))
                    .map_err(|e| ApiError { field: Some(field.into()), ..ApiError::from(e) })?;
                Ok(m.rho())
            };
            (rho(req.p0, "p0")?, rho(req.p1, "p1")?)
        }
    };
    let s = TwoByTwoSpec { p0: req.p0, p1: req.p1, rho0, rho1, kappa: req.kappa, measure: req.measure };
    s.validate()?;
    Ok(s)
}

pub fn plan_two_by_two_request(req: &TwoByTwoRequest) -> ApiResult<PlanResponse> {
    only_ppi_pp(req.method)?;
    let s = two_by_two_spec(req)?;
    // The effect size comes from (p0, p1); delta is a placeholder.
    let d = design_inputs(req.alpha, req.power, 1.0)?;
    let plan = two_by_two_n(&s, &d)?;
    let curve = curve(&plan, |n| two_by_two_power(&s, n, kappa_scale(s.kappa, n), d.alpha).unwrap_or(0.0));
    let inputs = json!({
        "p0": s.p0,
        "p1": s.p1,
        "rho0": s.rho0,
        "rho1": s.rho1,
        "kappa": s.kappa,
        "measure": s.measure,
        "log_effect": s.log_effect(),
        "alpha": req.alpha,
        "power": req.power,
    });
    Ok(PlanResponse { design: "two-by-two", method: req.method, plan, inputs, curve })
}

pub fn plan_regression_request(req: &RegressionRequest) -> ApiResult<PlanResponse> {
    only_ppi_pp(req.method)?;
    let c = ContrastBlocks::new(req.v_yy, req.v_ff, req.v_yf)?;
    let pool = pool(req.big_n)?;
    let d = design_inputs(req.alpha, req.power, req.delta)?;
    let plan = regression_contrast_n(&c, pool, &d)?;
    let curve = curve(&plan, |n| regression_contrast_power(&c, &SampleBudget::continuous(n as f64, pool), &d));
    let inputs = json!({
        "v_yy": c.v_yy,
        "v_ff": c.v_ff,
        "v_yf": c.v_yf,
        "N": req.big_n,
        "delta": req.delta,
        "alpha": req.alpha,
        "power": req.power,
    });
    Ok(PlanResponse { design: "regression", method: req.method, plan, inputs, curve })
}

pub fn calibrate_request(req: &CalibrateRequest) -> ApiResult<CalibrateResponse> {
    let m = req.moments.resolve()?;
    let lambda = match req.r {
        Some(r) if !(r >= 0.0 && r.is_finite()) => return Err(ApiError::field("r", "must be a nonnegative ratio")),
        Some(r) if m.var_f > 0.0 => Some(m.cov_yf / ((1.0 + r) * m.var_f)),
        Some(_) => Some(0.0),
        None => None,
    };
    Ok(CalibrateResponse {
        var_y: m.var_y,
        var_f: m.var_f,
        cov_yf: m.cov_yf,
        rho: m.rho(),
        rho2: m.rho2(),
        rule_of_thumb: rule_of_thumb(m.rho2())?,
        conservative: m.conservative,
        lambda,
    })
}

/// Top-level keys each request type accepts.
fn allowed_fields(endpoint: &str) -> Vec<&'static str> {
    let mut base: Vec<&'static str> = match endpoint {
        "mean" | "paired" => vec!["N", "delta", "alpha", "power", "method"],
        "two-sample" => vec!["group_b", "N", "N_b", "kappa", "delta", "alpha", "power", "method"],
        "calibrate" => vec!["r"],
        _ => return Vec::new(),
    };
    base.extend_from_slice(MOMENT_FIELDS);
    base
}

fn parse<T: for<'de> Deserialize<'de>>(endpoint: &str, body: &[u8]) -> ApiResult<T> {
    let value: Value = serde_json::from_slice(body)
        .map_err(|e| ApiError::new(400, "bad_json", format!("request body is not valid JSON: {e}")))?;
    let Value::Object(map) = &value else {
        return Err(ApiError::new(400, "bad_json", "request body must be a JSON object"));
    };
    check_fields(endpoint, map)?;
    serde_json::from_value(value).map_err(|e| {
        let message = e.to_string();
        let field = message.split('`').nth(1).map(str::to_string);
        ApiError { field, ..ApiError::new(400, "invalid_input", message) }
    })
}

/// Flattened request types cannot use `deny_unknown_fields`, so their keys
/// are checked here.
fn check_fields(endpoint: &str, map: &Map<String, Value>) -> ApiResult<()> {
    let allowed = allowed_fields(endpoint);
    if allowed.is_empty() {
        return Ok(());
    }
    if let Some(key) = map.keys().find(|k| !allowed.contains(&k.as_str())) {
        return Err(ApiError {
            field: Some(key.clone()),
            ..ApiError::new(400, "unknown_field", format!("unknown field `{key}`"))
        });
    }
    if let Some(Value::Object(group)) = map.get("group_b") {
        if let Some(key) = group.keys().find(|k| !MOMENT_FIELDS.contains(&k.as_str())) {
            return Err(ApiError {
                field: Some(format!("group_b.{key}")),
                ..ApiError::new(400, "unknown_field", format!("unknown field `{key}` in group_b"))
            });
        }
    }
    Ok(())
}

fn respond<T: Serialize>(r: ApiResult<T>) -> (u16, Value) {
    match r {
        Ok(v) => (200, serde_json::to_value(v).expect("responses serialize")),
        Err(e) => (e.status, e.body()),
    }
}

fn is_json(content_type: Option<&str>) -> bool {
    content_type
        .and_then(|ct| ct.split(';').next())
        .is_some_and(|mime| mime.trim().eq_ignore_ascii_case("application/json"))
}

/// Route one request. Returns the HTTP status and JSON body.
pub fn dispatch(method: &str, path: &str, content_type: Option<&str>, body: &[u8]) -> (u16, Value) {
    let path = path.trim_end_matches('/');
    let endpoint = match path {
        "/v1/healthz" => {
            if method != "GET" {
                return (405, ApiError::new(405, "method_not_allowed", "use GET").body());
            }
            return (200, json!({ "status": "ok", "version": VERSION }));
        }
        "/v1/calibrate" => "calibrate",
        p => match p.strip_prefix("/v1/plan/") {
            Some(e @ ("mean" | "two-sample" | "paired" | "two-by-two" | "regression")) => e,
            _ => return (404, ApiError::new(404, "not_found", format!("no endpoint at {path}")).body()),
        },
    };
    if method != "POST" {
        return (405, ApiError::new(405, "method_not_allowed", "use POST").body());
    }
    if !is_json(content_type) {
        return (415, ApiError::new(415, "unsupported_media_type", "Content-Type must be application/json").body());
    }
    match endpoint {
        "mean" => respond(parse(endpoint, body).and_then(|r| plan_mean_request(&r))),
        "paired" => respond(parse(endpoint, body).and_then(|r| plan_paired_request(&r))),
        "two-sample" => respond(parse(endpoint, body).and_then(|r| plan_two_sample_request(&r))),
        "two-by-two" => respond(parse(endpoint, body).and_then(|r| plan_two_by_two_request(&r))),
        "regression" => respond(parse(endpoint, body).and_then(|r| plan_regression_request(&r))),
        _ => respond(parse(endpoint, body).and_then(|r| calibrate_request(&r))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn post(path: &str, body: Value) -> (u16, Value) {
        dispatch("POST", path, Some("application/json"), body.to_string().as_bytes())
    }

    #[test]
    fn mean_example() {
        let (status, v) =
            post("/v1/plan/mean", json!({"sigma2": 1, "rho2": 0.49, "N": 5000, "delta": 0.2, "alpha": 0.05, "power": 0.8}));
        assert_eq!(status, 200, "{v}");
        assert_eq!(v["n_star"], 102);
        assert_eq!(v["classical_n"], 197);
        assert!((v["reduction"].as_f64().unwrap() - 0.482).abs() < 5e-4);
        assert_eq!(v["method"], "ppi++");
    }

    #[test]
    fn two_by_two_examples() {
        let (status, v) =
            post("/v1/plan/two-by-two", json!({"p0": 0.2, "p1": 0.4, "rho0": 0, "rho1": 0, "kappa": 1, "measure": "RR"}));
        assert_eq!(status, 200, "{v}");
        assert_eq!(v["n_star"], 90);
        let (_, v) = post("/v1/plan/two-by-two", json!({"p0": 0.2, "p1": 0.4, "se": 0.9, "sp": 0.9, "measure": "RR"}));
        assert_eq!(v["n_star"], 40);
        assert_eq!(v["classical_n"], 90);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let (status, v) = post("/v1/plan/mean", json!({"sigma2": 1, "rho2": 0.49, "delta": 0.2, "colour": 1}));
        assert_eq!(status, 400);
        assert_eq!(v["error"]["code"], "unknown_field");
        assert_eq!(v["error"]["field"], "colour");
        let (status, v) = post("/v1/plan/regression", json!({"v_yy": 2, "v_ff": 2, "v_yf": 1.4, "delta": 0.3, "x": 0}));
        assert_eq!(status, 400);
        assert_eq!(v["error"]["field"], "x");
        let (status, v) = post(
            "/v1/plan/two-sample",
            json!({"sigma2": 1, "rho2": 0.49, "delta": 0.3, "group_b": {"sigma2": 1, "rho": 0.5}}),
        );
        assert_eq!(status, 400);
        assert_eq!(v["error"]["field"], "group_b.rho");
    }

    #[test]
    fn field_level_validation() {
        let (status, v) = post("/v1/plan/mean", json!({"sigma2": 1, "rho2": 1.5, "delta": 0.2}));
        assert_eq!(status, 400);
        assert_eq!(v["error"]["field"], "rho2");
        let (status, v) = post("/v1/plan/mean", json!({"sigma2": 1, "rho2": 0.5, "mse": 0.5, "delta": 0.2}));
        assert_eq!(status, 400);
        assert_eq!(v["error"]["field"], "rho2");
        let (status, v) = post("/v1/plan/mean", json!({"sigma2": 1, "rho2": 0.5}));
        assert_eq!(status, 400);
        assert_eq!(v["error"]["field"], "delta");
        let (status, v) = post("/v1/plan/mean", json!({"rho2": 0.5, "delta": 0.2}));
        assert_eq!(status, 400);
        assert_eq!(v["error"]["field"], "sigma2");
        let (status, v) = post("/v1/calibrate", json!({"pilot_csv": "y,f\n1,2\n3,x\n"}));
        assert_eq!(status, 400);
        assert_eq!(v["error"]["row"], 3);
    }

    #[test]
    fn infeasible_vanilla_reports_min_pool() {
        let body = json!({"sigma2": 1, "rho2": 0.0, "N": 10, "delta": 0.2, "method": "vanilla"});
        let (status, v) = post("/v1/plan/mean", body);
        assert_eq!(status, 422, "{v}");
        assert_eq!(v["error"]["code"], "infeasible");
        let min_pool = v["error"]["min_pool"].as_u64().unwrap();
        let (ok, _) = post("/v1/plan/mean", json!({"sigma2": 1, "rho2": 0.0, "N": min_pool, "delta": 0.2, "method": "ppi"}));
        assert_eq!(ok, 200);
        let (bad, _) =
            post("/v1/plan/mean", json!({"sigma2": 1, "rho2": 0.0, "N": min_pool - 1, "delta": 0.2, "method": "ppi"}));
        assert_eq!(bad, 422);
    }

    #[test]
    fn transport_errors() {
        assert_eq!(dispatch("GET", "/v1/healthz", None, b"").0, 200);
        assert_eq!(dispatch("POST", "/v1/healthz", None, b"").0, 405);
        assert_eq!(dispatch("GET", "/v1/plan/mean", None, b"").0, 405);
        assert_eq!(dispatch("POST", "/v1/plan/other", Some("application/json"), b"{}").0, 404);
        assert_eq!(dispatch("POST", "/v1/plan/mean", Some("text/plain"), b"{}").0, 415);
        assert_eq!(dispatch("POST", "/v1/plan/mean", None, b"{}").0, 415);
        assert_eq!(dispatch("POST", "/v1/plan/mean", Some("application/json; charset=utf-8"), b"{").0, 400);
        assert_eq!(dispatch("POST", "/v1/plan/mean", Some("application/json"), b"[1]").0, 400);
    }

    #[test]
    fn curve_grid_spans_range() {
        let g = curve_grid(102, 197);
        assert_eq!(g.len(), 100);
        assert_eq!((g[0], g[99]), (1, 204));
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(curve_grid(3, 5), vec![1, 2, 3, 4, 5, 6]);
    }

    #[test]
    fn allowlists_match_serialized_fields() {
        let full = MomentInput {
            sigma2: Some(1.0),
            rho2: Some(0.1),
            mse: Some(0.1),
            p: Some(0.1),
            se: Some(0.1),
            sp: Some(0.1),
            var_f: Some(0.1),
            cov: Some(0.1),
            pilot_csv: Some(String::new()),
        };
        let keys = |v: Value| -> Vec<String> {
            let mut k: Vec<String> = v.as_object().unwrap().keys().cloned().collect();
            k.sort();
            k
        };
        let sorted = |e: &str| {
            let mut k: Vec<String> = allowed_fields(e).into_iter().map(String::from).collect();
            k.sort();
            k
        };
        let mean = MeanRequest {
            moments: full.clone(),
            big_n: Some(1),
            delta: 0.1,
            alpha: 0.05,
            power: 0.8,
            method: Estimator::PpiPlusPlus,
        };
        assert_eq!(keys(serde_json::to_value(&mean).unwrap()), sorted("mean"));
        let two = TwoSampleRequest {
            moments: full.clone(),
            group_b: Some(full.clone()),
            big_n: Some(1),
            big_n_b: Some(1),
            kappa: 1.0,
            delta: 0.1,
            alpha: 0.05,
            power: 0.8,
            method: Estimator::PpiPlusPlus,
        };
        assert_eq!(keys(serde_json::to_value(&two).unwrap()), sorted("two-sample"));
        let cal = CalibrateRequest { moments: full, r: Some(0.1) };
        assert_eq!(keys(serde_json::to_value(&cal).unwrap()), sorted("calibrate"));
    }
}
